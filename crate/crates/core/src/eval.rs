//! Threshold-on-cosine probing: per-layer similarities, threshold
//! calibration on dev, test evaluation by part of speech, and the full
//! layer sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{instance_id, Label, Pos, WicInstance};
use crate::error::{Error, Result};
use crate::geometry::{
    cosine, fit_stats, standardize_with, LayerStats, StandardizeMode, DEFAULT_EPS,
};
use crate::store::RepStore;
use crate::transforms::{SettingKind, Side};

/// Candidate thresholds, kept in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    /// `min, min + step, ...` up to and including `max` (within 1e-9).
    /// Points are rounded to 9 decimals so that e.g. `0.15` is the nearest
    /// double to 0.15 rather than `3 * 0.05`.
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 {
            return Err(Error::Usage(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if !(0.0..=1.0).contains(&min) || !(0.0..=1.0).contains(&max) || min > max {
            return Err(Error::Usage(format!(
                "grid bounds [{min}, {max}] must lie within [0, 1]"
            )));
        }
        let n = ((max - min) / step + 1e-9).floor() as usize + 1;
        let values = (0..n)
            .map(|k| ((min + k as f64 * step) * 1e9).round() / 1e9)
            .collect();
        Ok(ThresholdGrid { values })
    }

    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("threshold grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(
                "threshold grid contains a non-finite value",
            ));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(ThresholdGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for ThresholdGrid {
    /// `{0.00, 0.05, ..., 0.95}`.
    fn default() -> Self {
        ThresholdGrid::new(0.0, 0.95, 0.05).expect("static grid")
    }
}

/// How vectors are transformed before the cosine.
#[derive(Debug, Clone, Copy)]
pub enum Normalization<'a> {
    Raw,
    Standardize {
        stats: &'a LayerStats,
        mode: StandardizeMode,
    },
}

/// Stats over both sides of every instance at `layer`.
pub fn fit_layer_stats(store: &RepStore, layer: usize) -> Result<LayerStats> {
    check_layer(store, layer)?;
    let vectors: Vec<&[f32]> = (0..store.n_instances())
        .flat_map(|i| {
            [
                store.vector(i, Side::A, layer),
                store.vector(i, Side::B, layer),
            ]
        })
        .collect();
    fit_stats(&vectors)
}

fn check_layer(store: &RepStore, layer: usize) -> Result<()> {
    if layer >= store.layer_count() {
        return Err(Error::validation(format!(
            "layer {layer} out of range ({} levels)",
            store.layer_count()
        )));
    }
    Ok(())
}

/// Cosine of side A vs side B for every instance, in store order. With
/// `standardized`, z-scoring stats are fit on this store's layer.
pub fn layer_similarities(store: &RepStore, layer: usize, standardized: bool) -> Result<Vec<f64>> {
    if standardized {
        let stats = fit_layer_stats(store, layer)?;
        layer_similarities_with(
            store,
            layer,
            Normalization::Standardize {
                stats: &stats,
                mode: StandardizeMode::ZScore,
            },
        )
    } else {
        layer_similarities_with(store, layer, Normalization::Raw)
    }
}

pub fn layer_similarities_with(
    store: &RepStore,
    layer: usize,
    norm: Normalization<'_>,
) -> Result<Vec<f64>> {
    check_layer(store, layer)?;
    let prepare = |v: &[f32]| -> Result<Vec<f64>> {
        match norm {
            Normalization::Raw => Ok(v.iter().map(|&x| f64::from(x)).collect()),
            Normalization::Standardize { stats, mode } => {
                standardize_with(v, stats, mode, DEFAULT_EPS)
            }
        }
    };
    (0..store.n_instances())
        .map(|i| {
            let a = prepare(store.vector(i, Side::A, layer))?;
            let b = prepare(store.vector(i, Side::B, layer))?;
            cosine(&a, &b).map_err(|e| {
                Error::validation(format!(
                    "instance {} layer {layer}: {e}",
                    store.meta().instance_ids[i]
                ))
            })
        })
        .collect()
}

/// `Same` iff the similarity strictly exceeds `gamma`.
pub fn classify(similarities: &[f64], gamma: f64) -> Vec<Label> {
    similarities
        .iter()
        .map(|&s| {
            if s > gamma {
                Label::Same
            } else {
                Label::Different
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub layer: usize,
    pub gamma: f64,
    /// Percentage in `[0, 100]`.
    pub dev_accuracy: f64,
}

fn percent(correct: usize, total: usize) -> f64 {
    100.0 * correct as f64 / total as f64
}

/// Picks the grid threshold with the highest accuracy; ties go to the
/// smallest threshold.
pub fn calibrate_layer(
    layer: usize,
    similarities: &[f64],
    gold: &[Label],
    grid: &ThresholdGrid,
) -> Result<LayerCalibration> {
    if similarities.len() != gold.len() {
        return Err(Error::validation(format!(
            "{} similarities but {} labels",
            similarities.len(),
            gold.len()
        )));
    }
    if similarities.is_empty() {
        return Err(Error::validation("cannot calibrate on an empty set"));
    }
    let mut same = Vec::new();
    let mut different = Vec::new();
    for (&s, &g) in similarities.iter().zip(gold) {
        match g {
            Label::Same => same.push(s),
            Label::Different => different.push(s),
        }
    }
    same.sort_by(f64::total_cmp);
    different.sort_by(f64::total_cmp);

    let mut best: Option<(usize, f64)> = None;
    for &gamma in grid.values() {
        let same_correct = same.len() - same.partition_point(|&s| s <= gamma);
        let different_correct = different.partition_point(|&s| s <= gamma);
        let correct = same_correct + different_correct;
        let better = match best {
            None => true,
            Some((c, g)) => correct > c || (correct == c && gamma < g),
        };
        if better {
            best = Some((correct, gamma));
        }
    }
    let (correct, gamma) = best.expect("grid is non-empty");
    Ok(LayerCalibration {
        layer,
        gamma,
        dev_accuracy: percent(correct, similarities.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub all: f64,
    /// `None` when the subgroup is empty.
    pub noun: Option<f64>,
    pub verb: Option<f64>,
}

pub fn evaluate(similarities: &[f64], gold: &[Label], pos: &[Pos], gamma: f64) -> Result<Accuracy> {
    if similarities.len() != gold.len() || gold.len() != pos.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} similarities, {} labels, {} POS tags",
            similarities.len(),
            gold.len(),
            pos.len()
        )));
    }
    if similarities.is_empty() {
        return Err(Error::validation("cannot evaluate an empty set"));
    }
    let predicted = classify(similarities, gamma);
    let mut counts = [(0usize, 0usize); 2];
    for ((p, g), tag) in predicted.iter().zip(gold).zip(pos) {
        let slot = &mut counts[match tag {
            Pos::Noun => 0,
            Pos::Verb => 1,
        }];
        slot.1 += 1;
        if p == g {
            slot.0 += 1;
        }
    }
    let group = |(correct, total): (usize, usize)| (total > 0).then(|| percent(correct, total));
    let [noun, verb] = counts;
    Ok(Accuracy {
        all: percent(noun.0 + verb.0, noun.1 + verb.1),
        noun: group(noun),
        verb: group(verb),
    })
}

/// A store joined with the labels and POS tags of its split.
#[derive(Debug, Clone)]
pub struct LabeledStore<'a> {
    pub store: &'a RepStore,
    pub gold: Vec<Label>,
    pub pos: Vec<Pos>,
}

impl<'a> LabeledStore<'a> {
    /// Requires the store to list exactly the split's instances in corpus order.
    pub fn new(store: &'a RepStore, instances: &[WicInstance]) -> Result<Self> {
        let meta = store.meta();
        if meta.instance_ids.len() != instances.len() {
            return Err(Error::Alignment(format!(
                "store holds {} instances but split {:?} has {}",
                meta.instance_ids.len(),
                meta.split,
                instances.len()
            )));
        }
        for (i, id) in meta.instance_ids.iter().enumerate() {
            let expected = instance_id(&meta.split, i);
            if *id != expected {
                return Err(Error::Alignment(format!(
                    "store instance {i} is {id:?}, expected {expected:?}"
                )));
            }
        }
        let gold = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                inst.gold().ok_or_else(|| {
                    Error::validation(format!(
                        "instance {} has no gold label",
                        instance_id(&meta.split, i)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pos = instances.iter().map(WicInstance::pos).collect();
        Ok(LabeledStore { store, gold, pos })
    }
}

/// Which sample pool standardization stats for the test split come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareStats {
    /// Each split is standardized with its own stats.
    #[default]
    Split,
    /// Test vectors are standardized with dev-fitted stats.
    Dev,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub grid: ThresholdGrid,
    pub standardize: bool,
    pub mode: StandardizeMode,
    pub share_stats: ShareStats,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: ThresholdGrid::default(),
            standardize: true,
            mode: StandardizeMode::ZScore,
            share_stats: ShareStats::Split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer: usize,
    pub accuracy_all: f64,
    pub accuracy_noun: Option<f64>,
    pub accuracy_verb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: SettingKind,
    pub anisotropy_removed: bool,
    pub rows: Vec<ReportRow>,
    /// Argmax of test accuracy; ties go to the lower layer.
    pub best_layer: usize,
    pub best_accuracy: f64,
    /// Argmax of calibrated dev accuracy, for reference.
    pub best_dev_layer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub report: EvalReport,
    pub calibrations: Vec<LayerCalibration>,
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if v <= b => best,
        _ => Some((i, v)),
    })
}

pub fn check_compatible(dev: &RepStore, test: &RepStore) -> Result<()> {
    let (d, t) = (dev.meta(), test.meta());
    if d.layer_count != t.layer_count || d.dim != t.dim || d.setting != t.setting {
        return Err(Error::validation(format!(
            "incompatible stores: dev is {} levels x {} ({}), test is {} levels x {} ({})",
            d.layer_count, d.dim, d.setting, t.layer_count, t.dim, t.setting
        )));
    }
    Ok(())
}

/// Similarities of one layer on the dev and test sets under `options`.
pub fn split_similarities(
    dev: &RepStore,
    test: &RepStore,
    layer: usize,
    options: &SweepOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !options.standardize {
        return Ok((
            layer_similarities_with(dev, layer, Normalization::Raw)?,
            layer_similarities_with(test, layer, Normalization::Raw)?,
        ));
    }
    let dev_stats = fit_layer_stats(dev, layer)?;
    let test_stats = match options.share_stats {
        ShareStats::Split => fit_layer_stats(test, layer)?,
        ShareStats::Dev => dev_stats.clone(),
    };
    let norm = |stats| Normalization::Standardize {
        stats,
        mode: options.mode,
    };
    Ok((
        layer_similarities_with(dev, layer, norm(&dev_stats))?,
        layer_similarities_with(test, layer, norm(&test_stats))?,
    ))
}

/// Calibrates every layer on dev and evaluates it on test.
pub fn layer_sweep(
    dev: &LabeledStore<'_>,
    test: &LabeledStore<'_>,
    options: &SweepOptions,
) -> Result<SweepResult> {
    check_compatible(dev.store, test.store)?;
    let per_layer = (0..dev.store.layer_count())
        .into_par_iter()
        .map(|layer| {
            let (dev_sims, test_sims) = split_similarities(dev.store, test.store, layer, options)?;
            let calibration = calibrate_layer(layer, &dev_sims, &dev.gold, &options.grid)?;
            let acc = evaluate(&test_sims, &test.gold, &test.pos, calibration.gamma)?;
            Ok((
                calibration,
                ReportRow {
                    layer,
                    accuracy_all: acc.all,
                    accuracy_noun: acc.noun,
                    accuracy_verb: acc.verb,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (calibrations, rows): (Vec<_>, Vec<_>) = per_layer.into_iter().unzip();
    let (best_layer, best_accuracy) =
        argmax(rows.iter().map(|r| r.accuracy_all)).expect("at least two levels");
    let (best_dev_layer, _) =
        argmax(calibrations.iter().map(|c| c.dev_accuracy)).expect("at least two levels");
    Ok(SweepResult {
        report: EvalReport {
            setting: dev.store.meta().setting,
            anisotropy_removed: options.standardize,
            rows,
            best_layer,
            best_accuracy,
            best_dev_layer,
        },
        calibrations,
    })
}

/// Evaluates test with thresholds calibrated earlier (one per layer).
pub fn evaluate_layers(
    test: &LabeledStore<'_>,
    dev: Option<&RepStore>,
    calibrations: &[LayerCalibration],
    options: &SweepOptions,
) -> Result<EvalReport> {
    let store = test.store;
    if calibrations.len() != store.layer_count() {
        return Err(Error::validation(format!(
            "{} calibrated layers for a store with {} levels",
            calibrations.len(),
            store.layer_count()
        )));
    }
    if let Some(dev) = dev {
        check_compatible(dev, store)?;
    }
    let rows = calibrations
        .par_iter()
        .enumerate()
        .map(|(layer, cal)| {
            if cal.layer != layer {
                return Err(Error::validation(format!(
                    "calibration entry {layer} is for layer {}",
                    cal.layer
                )));
            }
            let sims = if !options.standardize {
                layer_similarities_with(store, layer, Normalization::Raw)?
            } else {
                let stats = match (options.share_stats, dev) {
                    (ShareStats::Dev, Some(dev)) => fit_layer_stats(dev, layer)?,
                    (ShareStats::Dev, None) => {
                        return Err(Error::Usage("dev-shared stats need the dev store".into()))
                    }
                    (ShareStats::Split, _) => fit_layer_stats(store, layer)?,
                };
                layer_similarities_with(
                    store,
                    layer,
                    Normalization::Standardize {
                        stats: &stats,
                        mode: options.mode,
                    },
                )?
            };
            let acc = evaluate(&sims, &test.gold, &test.pos, cal.gamma)?;
            Ok(ReportRow {
                layer,
                accuracy_all: acc.all,
                accuracy_noun: acc.noun,
                accuracy_verb: acc.verb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (best_layer, best_accuracy) =
        argmax(rows.iter().map(|r| r.accuracy_all)).expect("non-empty");
    let (best_dev_layer, _) =
        argmax(calibrations.iter().map(|c| c.dev_accuracy)).expect("non-empty");
    Ok(EvalReport {
        setting: store.meta().setting,
        anisotropy_removed: options.standardize,
        rows,
        best_layer,
        best_accuracy,
        best_dev_layer,
    })
}
