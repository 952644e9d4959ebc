//! Run manifests: every primary output file is accompanied by
//! `<output>.manifest.json` recording the command, resolved configuration,
//! seed, inputs, and tool version. Timestamps live only here so the outputs
//! themselves stay byte-identical across reruns.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub timestamp_utc: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
            timestamp_utc: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes the manifest next to `primary`, as `<primary>.manifest.json`.
    pub fn write_beside(&self, primary: &Path) -> Result<(), CliError> {
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path: PathBuf = primary.with_file_name(name);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Input(format!("manifest serialization: {e}")))?;
        crate::commands::write_atomic(&path, &text)
    }
}
