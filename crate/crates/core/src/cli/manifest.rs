//! Provenance sidecars written next to every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::write_text;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    /// Input path → sha256 hex digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path → sha256 hex digest.
    pub outputs: BTreeMap<String, String>,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Sidecar location for an artifact: `<artifact>.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

impl RunManifest {
    pub fn start(command: &str, config: &BTreeMap<String, String>, seed: u64) -> Self {
        let started = now();
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed,
            started_unix: started,
            finished_unix: started,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Records digests of `artifacts` and writes a sidecar next to each.
    pub fn finish(mut self, artifacts: &[PathBuf]) -> Result<()> {
        for a in artifacts {
            self.add_output(a)?;
        }
        self.finished_unix = now();
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::invalid(format!("cannot serialize manifest: {e}")))?;
        for a in artifacts {
            write_text(&manifest_path(a), &format!("{json}\n"))?;
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = crate::corpus::read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}
