//! Run manifests: a JSON record sufficient to re-run a command
//! bit-identically. Holds the effective config (echo plus hash), the trial
//! seeds, and content hashes of every dataset the command read or wrote.
//!
//! Manifests are deterministic: no timestamps, sorted keys, and the config
//! echo blanks the output directory so two runs of the same experiment in
//! different places produce byte-identical manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Dataset file name to SHA-256 of its bytes.
    pub datasets: BTreeMap<String, String>,
    /// Files produced by the run, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Manifest {
        let mut echo = config.clone();
        echo.out = PathBuf::new();
        Manifest {
            command: command.to_string(),
            config_hash: config.hash(),
            seeds: Vec::new(),
            datasets: BTreeMap::new(),
            outputs: Vec::new(),
            config: echo,
        }
    }

    pub fn record_seeds(&mut self, base: u64, trials: usize) {
        self.seeds = (0..trials as u64).map(|t| base + t).collect();
    }

    /// Hash a dataset file under its file name.
    pub fn add_dataset(&mut self, path: &Path) -> anyhow::Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.datasets.insert(name, sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, relative: impl Into<String>) {
        self.outputs.push(relative.into());
    }

    /// Write `manifest.json` into the directory and return its path.
    pub fn write(&mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.outputs.sort();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| crate::CliError::MissingData(format!("{}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}
