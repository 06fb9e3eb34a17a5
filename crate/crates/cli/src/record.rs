//! Reproducibility records written beside every artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ToolkitConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub stw: String,
    pub skintone_core: String,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            stw: env!("CARGO_PKG_VERSION").to_string(),
            skintone_core: skintone_core::VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// SHA-256 over the effective toolkit config and the command's options.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub options: serde_json::Value,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub unix_time: u64,
}

impl RunRecord {
    pub fn new<A: Serialize>(command: &str, args: &A, config: &ToolkitConfig, seed: Option<u64>) -> Self {
        let options = serde_json::to_value(args).expect("options serialize");
        let config = serde_json::to_value(config).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&config).expect("json"));
        hasher.update(b"\n");
        hasher.update(serde_json::to_vec(&options).expect("json"));
        let config_hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            versions: Versions::current(),
            options,
            config,
            outputs: Vec::new(),
            unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn output(mut self, path: impl Into<PathBuf>) -> Self {
        self.outputs.push(path.into());
        self
    }

    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".record.json");
        PathBuf::from(name)
    }

    /// Writes `<artifact>.record.json` next to the first output.
    pub fn write(&self) -> Result<PathBuf> {
        let first = self.outputs.first().context("record has no output")?;
        let path = Self::path_for(first);
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
