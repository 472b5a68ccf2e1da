//! Run manifest: configuration snapshot, root seed, and per-stage artifact
//! fingerprints. The deterministic part of the manifest decides stage
//! resumption; wall-clock timings are informational only.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Fingerprint of everything this stage's output depends on.
    pub input_hash: String,
    /// Fingerprint of the artifact file the stage wrote.
    pub artifact_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    /// Snapshot of the loaded config (overrides applied).
    pub config_toml: String,
    pub stages: BTreeMap<String, StageRecord>,
    /// Informational; excluded from all determinism guarantees.
    #[serde(default)]
    pub runtime_seconds: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(seed: u64, config_toml: String) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            seed,
            config_toml,
            stages: BTreeMap::new(),
            runtime_seconds: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text)?;
        anyhow::ensure!(
            m.version == MANIFEST_VERSION,
            "manifest version {} not supported",
            m.version
        );
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// A stage may be skipped when its recorded input hash matches and its
    /// artifact is still on disk unchanged.
    pub fn stage_is_current(&self, stage: &str, input_hash: &str, artifact: &Path) -> bool {
        match self.stages.get(stage) {
            Some(rec) if rec.input_hash == input_hash => match hash_file(artifact) {
                Ok(h) => h == rec.artifact_hash,
                Err(_) => false,
            },
            _ => false,
        }
    }

    pub fn record_stage(&mut self, stage: &str, input_hash: String, artifact: &Path) -> Result<()> {
        let artifact_hash = hash_file(artifact)?;
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                input_hash,
                artifact_hash,
            },
        );
        Ok(())
    }
}

/// FNV-1a over raw bytes, hex-encoded.
pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

/// Combine several fingerprint parts into one stage input hash.
pub fn combine_hashes(parts: &[&str]) -> String {
    hash_bytes(parts.join("|").as_bytes())
}
