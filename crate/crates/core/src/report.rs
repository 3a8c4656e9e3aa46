//! Crash reports: the multimodal input of one case.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("case id must not be empty")]
    EmptyCaseId,
    #[error("case {0}: summary is empty")]
    EmptySummary(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: not a case directory (expected case_<id>/summary.txt)")]
    NotACase(String),
    #[error("duplicate case id {0}")]
    DuplicateCase(String),
}

/// Encoded image bytes plus their media type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
    pub media_type: String,
}

impl Image {
    pub fn new(bytes: Vec<u8>, media_type: impl Into<String>) -> Self {
        Self {
            bytes,
            media_type: media_type.into(),
        }
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    /// Media type guessed from a file extension.
    pub fn media_type_for(path: &Path) -> Option<&'static str> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some("image/png"),
            "jpg" | "jpeg" => Some("image/jpeg"),
            "gif" => Some("image/gif"),
            "webp" => Some("image/webp"),
            _ => None,
        }
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let bytes = fs::read(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let media_type = Self::media_type_for(path).unwrap_or("application/octet-stream");
        Ok(Self::new(bytes, media_type))
    }

    pub fn is_well_formed(&self) -> bool {
        !self.bytes.is_empty() && !self.media_type.is_empty()
    }
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// One crash case: identifier, narrative summary and an optional sketch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReport {
    pub case_id: String,
    pub summary: String,
    pub sketch: Option<Image>,
}

impl CrashReport {
    pub fn new(
        case_id: impl Into<String>,
        summary: impl Into<String>,
        sketch: Option<Image>,
    ) -> Result<Self, ReportError> {
        let case_id = case_id.into();
        let summary = summary.into();
        if case_id.trim().is_empty() {
            return Err(ReportError::EmptyCaseId);
        }
        if summary.trim().is_empty() {
            return Err(ReportError::EmptySummary(case_id));
        }
        Ok(Self {
            case_id,
            summary,
            sketch,
        })
    }

    /// Reads `case_<id>/summary.txt` and an optional `sketch.png|jpg|jpeg`.
    pub fn read_dir(dir: &Path) -> Result<Self, ReportError> {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let case_id = name
            .strip_prefix("case_")
            .ok_or_else(|| ReportError::NotACase(dir.display().to_string()))?;
        let summary_path = dir.join("summary.txt");
        let summary = fs::read_to_string(&summary_path).map_err(|source| ReportError::Io {
            path: summary_path.display().to_string(),
            source,
        })?;
        let sketch = ["sketch.png", "sketch.jpg", "sketch.jpeg"]
            .iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
            .map(|p| Image::read(&p))
            .transpose()?;
        Self::new(case_id, summary.trim_end().to_string(), sketch)
    }
}

/// Loads every `case_<id>` directory under `root`, ordered by directory name.
pub fn read_cases(root: &Path) -> Result<Vec<CrashReport>, ReportError> {
    let io = |source| ReportError::Io {
        path: root.display().to_string(),
        source,
    };
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(io)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("case_"))
        })
        .collect();
    dirs.sort();
    let reports = dirs
        .iter()
        .map(|d| CrashReport::read_dir(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reports)
}
