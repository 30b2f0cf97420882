//! Provenance record written next to every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{bytes_sha256, file_sha256, write_atomic};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of the effective configuration text.
    pub config_hash: Option<String>,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Output path to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, args: &[String]) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            config_hash: None,
            inputs: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: 0,
            outputs: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, text: &str) {
        self.config_hash = Some(bytes_sha256(text.as_bytes()));
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Writes `bytes` to `path` and records its hash.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.insert(path.display().to_string(), bytes_sha256(bytes));
        Ok(())
    }

    /// Writes one copy of the manifest beside each output.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.finished_unix = unix_now();
        let json = serde_json::to_string_pretty(&self)?;
        let mut written = Vec::new();
        for out in self.outputs.keys() {
            let path = PathBuf::from(format!("{out}{MANIFEST_SUFFIX}"));
            write_atomic(&path, json.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}
