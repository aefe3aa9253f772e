//! The `.lexrep` binary store of pooled per-layer word representations.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                                  |
//! |-------|----------------------------------------------------------|
//! | 8     | magic `LEXREP01`                                         |
//! | 16    | `u32` counts `[n_instances, 2, layer_count, dim]`        |
//! | 4     | `u32` length of the metadata block                       |
//! | n     | UTF-8 JSON metadata ([`StoreMeta`])                      |
//! | rest  | `f32` payload, row-major instance → side → layer → dim   |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{SettingKind, Side};

pub const MAGIC: &[u8; 8] = b"LEXREP01";
pub const SIDES: usize = 2;
const HEADER_LEN: usize = 8 + 16 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub model_name: String,
    pub setting: SettingKind,
    pub split: String,
    pub pooling: String,
    pub layer_count: usize,
    pub dim: usize,
    pub instance_ids: Vec<String>,
    /// Producer-specific keys (template, tokenizer version, precision, ...).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepStore {
    meta: StoreMeta,
    data: Vec<f32>,
}

fn check_finite(data: &[f32], layer_count: usize, dim: usize) -> Result<()> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        let per_side = layer_count * dim;
        let per_instance = SIDES * per_side;
        return Err(Error::validation(format!(
            "non-finite value {} at instance {}, side {}, layer {}, dim {}",
            data[pos],
            pos / per_instance,
            (pos % per_instance) / per_side,
            (pos % per_side) / dim,
            pos % dim
        )));
    }
    Ok(())
}

impl RepStore {
    /// Builds a store, checking that `data` matches the metadata shape.
    pub fn new(meta: StoreMeta, data: Vec<f32>) -> Result<Self> {
        if meta.layer_count < 2 {
            return Err(Error::validation(format!(
                "layer_count must be at least 2, got {}",
                meta.layer_count
            )));
        }
        if meta.dim == 0 {
            return Err(Error::validation("dim must be at least 1"));
        }
        let expected = meta.instance_ids.len() * SIDES * meta.layer_count * meta.dim;
        if data.len() != expected {
            return Err(Error::validation(format!(
                "payload has {} values, metadata implies {expected}",
                data.len()
            )));
        }
        check_finite(&data, meta.layer_count, meta.dim)?;
        Ok(RepStore { meta, data })
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn n_instances(&self) -> usize {
        self.meta.instance_ids.len()
    }

    pub fn layer_count(&self) -> usize {
        self.meta.layer_count
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    fn offset(&self, instance: usize, side: Side, layer: usize) -> usize {
        let side = match side {
            Side::A => 0,
            Side::B => 1,
        };
        ((instance * SIDES + side) * self.meta.layer_count + layer) * self.meta.dim
    }

    pub fn vector(&self, instance: usize, side: Side, layer: usize) -> &[f32] {
        let start = self.offset(instance, side, layer);
        &self.data[start..start + self.meta.dim]
    }

    /// Applies `f` to every vector of `layer`, then re-checks finiteness.
    pub fn map_layer(&mut self, layer: usize, mut f: impl FnMut(&mut [f32])) -> Result<()> {
        for i in 0..self.n_instances() {
            for side in [Side::A, Side::B] {
                let start = self.offset(i, side, layer);
                let dim = self.meta.dim;
                f(&mut self.data[start..start + dim]);
            }
        }
        check_finite(&self.data, self.meta.layer_count, self.meta.dim)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::validation(format!("metadata does not serialize: {e}")))?;
        let counts = [
            self.n_instances(),
            SIDES,
            self.layer_count(),
            self.dim(),
            meta.len(),
        ];
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for c in counts {
            let c = u32::try_from(c)
                .map_err(|_| Error::validation(format!("count {c} does not fit in 32 bits")))?;
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&meta);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::format(None, "not a .lexrep file (bad magic)"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corruption(format!(
                "header truncated at {} bytes",
                bytes.len()
            )));
        }
        let word = |i: usize| {
            let at = 8 + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
        };
        let (n_instances, sides, layer_count, dim, meta_len) =
            (word(0), word(1), word(2), word(3), word(4));
        if sides != SIDES {
            return Err(Error::format(
                None,
                format!("side count {sides}, expected {SIDES}"),
            ));
        }
        let meta_end = HEADER_LEN
            .checked_add(meta_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Corruption("metadata block truncated".into()))?;
        let meta: StoreMeta = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])
            .map_err(|e| Error::format(None, format!("metadata JSON: {e}")))?;
        if (meta.instance_ids.len(), meta.layer_count, meta.dim) != (n_instances, layer_count, dim)
        {
            return Err(Error::format(
                None,
                format!(
                    "metadata shape [{}, {}, {}] disagrees with header [{n_instances}, {layer_count}, {dim}]",
                    meta.instance_ids.len(),
                    meta.layer_count,
                    meta.dim
                ),
            ));
        }
        let n_values = n_instances
            .checked_mul(SIDES * layer_count)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::Corruption("header counts overflow".into()))?;
        let payload = &bytes[meta_end..];
        if payload.len() as u128 != 4 * n_values as u128 {
            return Err(Error::Corruption(format!(
                "payload is {} bytes, header declares {}",
                payload.len(),
                4 * n_values as u128
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        RepStore::new(meta, data)
    }
}

/// Writes via a temporary sibling file and a rename.
pub fn write_store(store: &RepStore, path: &Path) -> Result<()> {
    let bytes = store.to_bytes()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_store(path: &Path) -> Result<RepStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    RepStore::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(n: usize, layers: usize, dim: usize) -> StoreMeta {
        StoreMeta {
            model_name: "test".into(),
            setting: SettingKind::Base,
            split: "dev".into(),
            pooling: "mean-overlap".into(),
            layer_count: layers,
            dim,
            instance_ids: (0..n).map(|i| format!("dev-{i}")).collect(),
            extra: BTreeMap::new(),
        }
    }

    fn minimal() -> RepStore {
        RepStore::new(meta(1, 2, 3), (0..12).map(|v| v as f32 * 0.5).collect()).unwrap()
    }

    #[test]
    fn minimal_file_size() {
        let store = minimal();
        let meta_len = serde_json::to_vec(store.meta()).unwrap().len();
        let bytes = store.to_bytes().unwrap();
        assert_eq!(bytes.len(), 8 + 16 + 4 + meta_len + 2 * 2 * 3 * 4);
        assert_eq!(
            &bytes[8..24],
            &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]
        );
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.lexrep");
        let store = minimal();
        write_store(&store, &path).unwrap();
        assert_eq!(read_store(&path).unwrap(), store);
        assert!(!dir.path().join("s.lexrep.tmp").exists());
    }

    #[test]
    fn indexing_is_instance_side_layer_dim() {
        let store = minimal();
        assert_eq!(store.vector(0, Side::A, 0), &[0.0, 0.5, 1.0]);
        assert_eq!(store.vector(0, Side::A, 1), &[1.5, 2.0, 2.5]);
        assert_eq!(store.vector(0, Side::B, 1), &[4.5, 5.0, 5.5]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = minimal().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            RepStore::from_bytes(&bytes),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = minimal().to_bytes().unwrap();
        assert!(matches!(
            RepStore::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Corruption(_))
        ));
        assert!(matches!(
            RepStore::from_bytes(&bytes[..20]),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = minimal().to_bytes().unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            RepStore::from_bytes(&bytes),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn nan_reported_with_index() {
        let mut bytes = minimal().to_bytes().unwrap();
        let n = bytes.len();
        // last value: instance 0, side B, layer 1, dim 2
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        match RepStore::from_bytes(&bytes) {
            Err(Error::Validation(msg)) => assert!(msg.contains("side 1, layer 1, dim 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_checks() {
        assert!(RepStore::new(meta(1, 1, 3), vec![0.0; 6]).is_err());
        assert!(RepStore::new(meta(1, 2, 0), vec![]).is_err());
        assert!(RepStore::new(meta(1, 2, 3), vec![0.0; 11]).is_err());
    }

    #[test]
    fn extra_metadata_survives() {
        let mut m = meta(1, 2, 3);
        m.extra
            .insert("prompt_template".into(), "x {sentence} {word}".into());
        let store = RepStore::new(m, vec![1.0; 12]).unwrap();
        let back = RepStore::from_bytes(&store.to_bytes().unwrap()).unwrap();
        assert_eq!(back.meta().extra["prompt_template"], "x {sentence} {word}");
    }

    #[test]
    fn full_scale_header_counts() {
        // 1400 instances, 33 levels of 4096: header only, payload not materialized.
        let m = meta(1400, 33, 4096);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        for c in [1400u32, 2, 33, 4096] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        let json = serde_json::to_vec(&m).unwrap();
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        // Header parses; payload absent is reported as corruption, not a panic.
        assert!(matches!(
            RepStore::from_bytes(&bytes),
            Err(Error::Corruption(_))
        ));
    }
}
