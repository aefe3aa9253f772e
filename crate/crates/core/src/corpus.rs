//! Word-in-Context corpus parsing.
//!
//! The distribution ships one directory per split holding
//! `<split>.data.txt` (five tab-separated columns: target, POS, `i-j`
//! index pair, sentence 1, sentence 2) and an optional `<split>.gold.txt`
//! with one `T`/`F` label per line.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Pos {
    Noun,
    Verb,
}

impl Pos {
    pub fn tag(self) -> &'static str {
        match self {
            Pos::Noun => "N",
            Pos::Verb => "V",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    Same,
    Different,
}

impl Label {
    pub fn tag(self) -> &'static str {
        match self {
            Label::Same => "T",
            Label::Different => "F",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Byte ranges of the whitespace-delimited words of `text`.
pub fn word_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, b) in text.bytes().enumerate() {
        if b.is_ascii_whitespace() {
            if let Some(s) = start.take() {
                spans.push(s..i);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

pub fn word_count(text: &str) -> usize {
    text.split_ascii_whitespace().count()
}

/// One WiC item. Fields are validated on construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WicInstance {
    target_lemma: String,
    pos: Pos,
    idx_a: usize,
    idx_b: usize,
    sentence_a: String,
    sentence_b: String,
    gold: Option<Label>,
}

impl WicInstance {
    pub fn new(
        target_lemma: impl Into<String>,
        pos: Pos,
        idx_a: usize,
        idx_b: usize,
        sentence_a: impl Into<String>,
        sentence_b: impl Into<String>,
        gold: Option<Label>,
    ) -> Result<Self> {
        let instance = WicInstance {
            target_lemma: target_lemma.into(),
            pos,
            idx_a,
            idx_b,
            sentence_a: sentence_a.into(),
            sentence_b: sentence_b.into(),
            gold,
        };
        for (name, sentence, idx) in [
            ("sentence_a", &instance.sentence_a, idx_a),
            ("sentence_b", &instance.sentence_b, idx_b),
        ] {
            let n = word_count(sentence);
            if n == 0 {
                return Err(Error::validation(format!("{name} is empty")));
            }
            if idx >= n {
                return Err(Error::validation(format!(
                    "{name} word index {idx} out of range ({n} words)"
                )));
            }
        }
        Ok(instance)
    }

    pub fn target_lemma(&self) -> &str {
        &self.target_lemma
    }

    pub fn pos(&self) -> Pos {
        self.pos
    }

    pub fn idx_a(&self) -> usize {
        self.idx_a
    }

    pub fn idx_b(&self) -> usize {
        self.idx_b
    }

    pub fn sentence_a(&self) -> &str {
        &self.sentence_a
    }

    pub fn sentence_b(&self) -> &str {
        &self.sentence_b
    }

    pub fn gold(&self) -> Option<Label> {
        self.gold
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub n_instances: usize,
    pub n_noun: usize,
    pub n_verb: usize,
    pub n_true: usize,
    pub n_false: usize,
}

pub fn split_stats(instances: &[WicInstance]) -> SplitStats {
    let mut stats = SplitStats::default();
    for inst in instances {
        stats.n_instances += 1;
        match inst.pos {
            Pos::Noun => stats.n_noun += 1,
            Pos::Verb => stats.n_verb += 1,
        }
        match inst.gold {
            Some(Label::Same) => stats.n_true += 1,
            Some(Label::Different) => stats.n_false += 1,
            None => {}
        }
    }
    stats
}

fn parse_index_pair(field: &str, line: usize) -> Result<(usize, usize)> {
    let (a, b) = field.split_once('-').ok_or_else(|| {
        Error::format(
            Some(line),
            format!("index pair {field:?} is not of the form i-j"),
        )
    })?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::format(Some(line), format!("bad word index {s:?}")))
    };
    Ok((parse(a)?, parse(b)?))
}

fn parse_label(field: &str, line: usize) -> Result<Label> {
    match field.trim() {
        "T" => Ok(Label::Same),
        "F" => Ok(Label::Different),
        other => Err(Error::format(
            Some(line),
            format!("gold label {other:?} is not T or F"),
        )),
    }
}

/// Parses split contents already in memory. Lines are numbered from 1 in errors.
pub fn parse_split_str(data: &str, gold: Option<&str>) -> Result<Vec<WicInstance>> {
    let data_lines: Vec<&str> = data.lines().collect();
    let labels = match gold {
        Some(g) => {
            let lines: Vec<&str> = g.lines().collect();
            if lines.len() != data_lines.len() {
                return Err(Error::Alignment(format!(
                    "gold file has {} lines but data file has {}",
                    lines.len(),
                    data_lines.len()
                )));
            }
            let labels = lines
                .iter()
                .enumerate()
                .map(|(i, l)| parse_label(l, i + 1))
                .collect::<Result<Vec<_>>>()?;
            Some(labels)
        }
        None => None,
    };

    let mut instances = Vec::with_capacity(data_lines.len());
    for (i, raw) in data_lines.iter().enumerate() {
        let line = i + 1;
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::format(
                Some(line),
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let pos = match cols[1] {
            "N" => Pos::Noun,
            "V" => Pos::Verb,
            other => {
                return Err(Error::format(
                    Some(line),
                    format!("POS tag {other:?} is not N or V"),
                ))
            }
        };
        let (idx_a, idx_b) = parse_index_pair(cols[2], line)?;
        let gold = labels.as_ref().map(|l| l[i]);
        let inst =
            WicInstance::new(cols[0], pos, idx_a, idx_b, cols[3], cols[4], gold).map_err(|e| {
                match e {
                    Error::Validation(msg) => Error::validation(format!("line {line}: {msg}")),
                    other => other,
                }
            })?;
        instances.push(inst);
    }
    Ok(instances)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_split(data_path: &Path, gold_path: Option<&Path>) -> Result<Vec<WicInstance>> {
    let data = read_text(data_path)?;
    let gold = gold_path.map(read_text).transpose()?;
    parse_split_str(&data, gold.as_deref())
}

/// Inverse of [`parse_split_str`]: returns the data file text and, when every
/// instance carries a label, the gold file text.
pub fn serialize_split(instances: &[WicInstance]) -> (String, Option<String>) {
    let mut data = String::new();
    let mut gold = Some(String::new());
    for inst in instances {
        data.push_str(&format!(
            "{}\t{}\t{}-{}\t{}\t{}\n",
            inst.target_lemma,
            inst.pos.tag(),
            inst.idx_a,
            inst.idx_b,
            inst.sentence_a,
            inst.sentence_b
        ));
        match (gold.as_mut(), inst.gold) {
            (Some(g), Some(label)) => {
                g.push_str(label.tag());
                g.push('\n');
            }
            _ => gold = None,
        }
    }
    (data, gold)
}

/// `<dir>/<split>/<split>.data.txt` and `<dir>/<split>/<split>.gold.txt`.
pub fn split_paths(dataset_dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    let base = dataset_dir.join(split);
    (
        base.join(format!("{split}.data.txt")),
        base.join(format!("{split}.gold.txt")),
    )
}

/// Loads a split from the distribution layout. The gold file is used when
/// present; the returned flag tells whether it was found.
pub fn load_split(dataset_dir: &Path, split: &str) -> Result<(Vec<WicInstance>, bool)> {
    let (data, gold) = split_paths(dataset_dir, split);
    let has_gold = gold.is_file();
    let instances = parse_split(&data, has_gold.then_some(gold.as_path()))?;
    Ok((instances, has_gold))
}

/// Stable identifier of the `index`-th instance of a split, as recorded in stores.
pub fn instance_id(split: &str, index: usize) -> String {
    format!("{split}-{index}")
}

/// One JSON object per line, in corpus order.
pub fn to_jsonl(instances: &[WicInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        // Serializing a plain struct of strings and enums cannot fail.
        out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        out.push('\n');
    }
    out
}
