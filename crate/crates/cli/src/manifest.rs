use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use causal_twin::classifier::MODEL_FORMAT_VERSION;
use causal_twin::envelope::sha256_hex;
use causal_twin::scm::SCM_FORMAT_VERSION;
use serde::{Deserialize, Serialize};

use crate::output::file_digest;

/// Everything needed to replay a run. Timing fields are the only ones
/// expected to differ between two replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: Vec<String>,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub format_versions: BTreeMap<String, u32>,
    pub status: String,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: Vec<String>, config_bytes: &[u8]) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        ManifestBuilder {
            manifest: RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command,
                config_hash: sha256_hex(config_bytes),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                seeds: BTreeMap::new(),
                format_versions: BTreeMap::from([
                    ("model".to_string(), MODEL_FORMAT_VERSION),
                    ("scm".to_string(), SCM_FORMAT_VERSION),
                ]),
                status: "running".into(),
                started_unix_ms: started,
                elapsed_ms: 0,
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn outputs(&mut self, digests: &BTreeMap<String, String>) {
        self.manifest.outputs.extend(digests.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    pub fn finish(mut self, status: &str) -> RunManifest {
        self.manifest.status = status.to_string();
        self.manifest.elapsed_ms = self.clock.elapsed().as_millis();
        self.manifest
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
