#![allow(dead_code)]

use std::fs;
use std::path::Path;

use lexprobe::corpus::{serialize_split, Label, Pos, WicInstance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOUNS: &[&str] = &[
    "bank", "plant", "bat", "spring", "match", "light", "letter", "crane", "seal", "table",
];
const VERBS: &[&str] = &[
    "run", "draw", "break", "play", "fire", "carry", "hold", "strike", "charge", "lead",
];
const FILLER: &[&str] = &[
    "the", "a", "old", "river", "money", "green", "he", "she", "saw", "near", "was", "quite", "by",
    "morning", "city", "we", "their", "small", "of", "to", "in", "after", "long", "road",
];

fn sentence(rng: &mut ChaCha8Rng, target: &str) -> (String, usize) {
    let len = rng.gen_range(4..9);
    let idx = rng.gen_range(0..len);
    let words: Vec<&str> = (0..len)
        .map(|i| {
            if i == idx {
                target
            } else {
                FILLER.choose(rng).copied().unwrap()
            }
        })
        .collect();
    (words.join(" "), idx)
}

/// Random sentences with labels drawn independently of the text.
pub fn shuffled_instances(n: usize, seed: u64) -> Vec<WicInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pos = if rng.gen_bool(0.5) {
                Pos::Noun
            } else {
                Pos::Verb
            };
            let lemma = match pos {
                Pos::Noun => NOUNS.choose(&mut rng).unwrap(),
                Pos::Verb => VERBS.choose(&mut rng).unwrap(),
            };
            let (a, ia) = sentence(&mut rng, lemma);
            let (b, ib) = sentence(&mut rng, lemma);
            let gold = if rng.gen_bool(0.5) {
                Label::Same
            } else {
                Label::Different
            };
            WicInstance::new(*lemma, pos, ia, ib, a, b, Some(gold)).unwrap()
        })
        .collect()
}

/// Same-labelled instances repeat sentence A verbatim as sentence B, so
/// their pooled vectors coincide. Different-labelled ones place the target
/// at another byte offset, so even a context-free embedding layer differs.
pub fn separable_instances(n: usize, seed: u64) -> Vec<WicInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pos = if rng.gen_bool(0.5) {
                Pos::Noun
            } else {
                Pos::Verb
            };
            let lemma = match pos {
                Pos::Noun => NOUNS.choose(&mut rng).unwrap(),
                Pos::Verb => VERBS.choose(&mut rng).unwrap(),
            };
            let (a, ia) = sentence(&mut rng, lemma);
            if rng.gen_bool(0.5) {
                WicInstance::new(*lemma, pos, ia, ia, a.clone(), a, Some(Label::Same)).unwrap()
            } else {
                let (b, ib) = loop {
                    let (b, ib) = sentence(&mut rng, lemma);
                    if target_start(&b, ib) != target_start(&a, ia) {
                        break (b, ib);
                    }
                };
                WicInstance::new(*lemma, pos, ia, ib, a, b, Some(Label::Different)).unwrap()
            }
        })
        .collect()
}

fn target_start(sentence: &str, idx: usize) -> usize {
    sentence.split(' ').take(idx).map(|w| w.len() + 1).sum()
}

/// Writes `<dir>/<split>/<split>.data.txt` (and `.gold.txt` when `with_gold`).
pub fn write_split(dir: &Path, split: &str, instances: &[WicInstance], with_gold: bool) {
    let base = dir.join(split);
    fs::create_dir_all(&base).unwrap();
    let (data, gold) = serialize_split(instances);
    fs::write(base.join(format!("{split}.data.txt")), data).unwrap();
    if with_gold {
        fs::write(base.join(format!("{split}.gold.txt")), gold.unwrap()).unwrap();
    }
}

/// Independent accuracy count: classify by hand, compare, scale to percent.
pub fn brute_accuracy(sims: &[f64], gold: &[Label], gamma: f64) -> f64 {
    let mut correct = 0usize;
    for i in 0..sims.len() {
        let predicted_same = sims[i] > gamma;
        let is_same = gold[i] == Label::Same;
        if predicted_same == is_same {
            correct += 1;
        }
    }
    100.0 * correct as f64 / sims.len() as f64
}

/// Exhaustive grid maximization with smallest-threshold tie-break.
pub fn brute_calibrate(sims: &[f64], gold: &[Label], grid: &[f64]) -> (f64, f64) {
    let mut points: Vec<f64> = grid.to_vec();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_gamma = points[0];
    let mut best_acc = brute_accuracy(sims, gold, points[0]);
    for &g in &points[1..] {
        let acc = brute_accuracy(sims, gold, g);
        if acc > best_acc {
            best_acc = acc;
            best_gamma = g;
        }
    }
    (best_gamma, best_acc)
}

/// Per-dimension mean and population std by the two-pass formula.
pub fn two_pass_stats(vectors: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = vectors.len() as f64;
    let dim = vectors[0].len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for d in 0..dim {
            mean[d] += v[d];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for v in vectors {
        for d in 0..dim {
            var[d] += (v[d] - mean[d]) * (v[d] - mean[d]);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt()).collect();
    (mean, std)
}
