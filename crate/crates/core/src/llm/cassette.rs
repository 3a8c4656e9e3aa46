//! Newline-delimited record of request fingerprints and replies.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<HashMap<String, CassetteEntry>>,
}

impl Cassette {
    fn error(path: &Path, message: impl Into<String>) -> LlmError {
        LlmError::Cassette {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Parses an existing cassette; duplicate fingerprints are an error.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| Self::error(path, e.to_string()))?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line)
                .map_err(|e| Self::error(path, format!("line {}: {e}", i + 1)))?;
            if entries.contains_key(&entry.fingerprint) {
                return Err(Self::error(
                    path,
                    format!("line {}: duplicate fingerprint {}", i + 1, entry.fingerprint),
                ));
            }
            entries.insert(entry.fingerprint.clone(), entry);
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
        })
    }

    pub fn open_or_create(path: &Path) -> Result<Self, LlmError> {
        if path.exists() {
            return Self::load(path);
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Self::error(path, e.to_string()))?;
        }
        fs::write(path, "").map_err(|e| Self::error(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Option<CassetteEntry> {
        self.entries
            .lock()
            .expect("cassette lock poisoned")
            .get(fingerprint)
            .cloned()
    }

    /// Appends under the lock; an already-present fingerprint is left untouched.
    pub fn append(&self, entry: CassetteEntry) -> Result<(), LlmError> {
        let mut entries = self.entries.lock().expect("cassette lock poisoned");
        if entries.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        let mut line = serde_json::to_string(&entry).expect("entries serialize");
        line.push('\n');
        OpenOptions::new()
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| Self::error(&self.path, e.to_string()))?;
        entries.insert(entry.fingerprint.clone(), entry);
        Ok(())
    }
}
