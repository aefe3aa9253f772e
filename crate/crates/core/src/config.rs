//! Run manifests: a TOML file of `key = value` pairs. Command-line flags
//! take precedence over the file, which takes precedence over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::ShareStats;
use crate::geometry::StandardizeMode;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub setting: Option<String>,
    pub prompt_template: Option<String>,
    pub dev_store: Option<PathBuf>,
    pub test_store: Option<PathBuf>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub standardize: Option<bool>,
    pub standardize_mode: Option<StandardizeMode>,
    pub share_stats: Option<ShareStats>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub max_seq: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
