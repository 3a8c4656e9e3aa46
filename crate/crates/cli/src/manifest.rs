//! Run manifest: enough to re-execute a run in replay mode.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Digest of the command, config snapshot and inputs.
    pub run_id: String,
    pub command: String,
    pub tool_version: &'static str,
    pub config: Value,
    pub inputs: Vec<InputFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cassette_sha256: Option<String>,
    pub reproducible: bool,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Wall-clock measurements, kept here so that report files stay byte-stable.
    pub timings_ms: Value,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub fn input_files(paths: &[&Path]) -> Result<Vec<InputFile>> {
    paths
        .iter()
        .map(|p| {
            Ok(InputFile {
                path: p.display().to_string(),
                sha256: file_digest(p)?,
            })
        })
        .collect()
}

pub fn run_id(command: &str, config: &Value, inputs: &[InputFile]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(config.to_string().as_bytes());
    for i in inputs {
        h.update(i.sha256.as_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}
