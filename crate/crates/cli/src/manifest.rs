//! Run manifest: enough to repeat a run bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use comot::data::Removal;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub comot: &'static str,
    pub cli: &'static str,
    pub rustc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn digest(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
        })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub argv: Vec<String>,
    pub git_hash: &'static str,
    pub versions: Versions,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    pub removed_queries: Vec<Removal>,
    pub outputs: Vec<String>,
    /// Command-specific facts about the run.
    pub summary: Value,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            command: config.command.name(),
            argv: std::env::args().collect(),
            git_hash: env!("COMOT_GIT_HASH"),
            versions: Versions {
                comot: comot::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
                rustc: env!("COMOT_RUSTC_VERSION"),
            },
            seed: config.seed,
            config: config.clone(),
            inputs: Vec::new(),
            removed_queries: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}_manifest.json", self.command)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}
