//! Run manifest: every pipeline stage appends a record of the inputs it read,
//! the fingerprint of the configuration it consumed, and the artifacts it
//! wrote, so a run directory is self-describing.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub timestamp_utc: String,
    pub inputs: BTreeMap<String, String>,
    pub config_fingerprint: String,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> RunManifest {
        std::fs::read_to_string(dir.join("manifest.json"))
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or_default()
    }

    pub fn record(
        &mut self,
        stage: &str,
        inputs: BTreeMap<String, String>,
        fingerprint: String,
        outputs: Vec<String>,
    ) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            timestamp_utc: chrono::Utc::now().to_rfc3339(),
            inputs,
            config_fingerprint: fingerprint,
            outputs,
        });
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// FNV-1a hash of a serializable config, hex-encoded.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).unwrap_or_default();
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}
