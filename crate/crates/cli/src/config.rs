//! Optional JSON config file. Every field mirrors a command-line flag;
//! resolution order is flags > config > built-in defaults, and the resolved
//! values are echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Option<PathBuf>,
    pub family: Option<String>,
    pub mean: Option<f64>,
    pub n0: Option<usize>,
    pub modes: Option<u64>,
    pub truncation: Option<usize>,
    pub k: Option<usize>,
    pub eta_max: Option<f64>,
    pub eta_min: Option<f64>,
    pub runs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub dataset: Option<PathBuf>,
    pub truncation: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub trace_stride: Option<usize>,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub result: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub fits: Option<Vec<String>>,
    pub modes: Option<String>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub weights: Option<String>,
    pub bg_mu_min: Option<f64>,
    pub bg_mu_max: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))
        }
    }
}

/// Precedence helper: explicit flag, then config value, then default.
pub fn pick<T: Clone>(flag: &Option<T>, config: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| config.clone()).unwrap_or(default)
}

/// Like [`pick`] but with no default; missing values are an input error.
pub fn require<T: Clone>(flag: &Option<T>, config: &Option<T>, what: &str) -> Result<T, CliError> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::Input(format!("missing required {what}")))
}
