//! TOML run configuration; command-line flags override file values.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crashscene::llm::BackendConfig;
use crashscene::pipeline::PipelineConfig;
use crashscene::scene::GeometryParams;
use crashscene::sim::SimConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub geometry: GeometryParams,
    pub sim: SimConfig,
    pub llm: LlmSection,
    pub jobs: Option<usize>,
}

/// Backend settings accepted from a config file. Credentials only come from the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub mode: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_retries: Option<u32>,
    pub cassette: Option<std::path::PathBuf>,
    pub requests_per_minute: Option<u32>,
    pub retry_base_ms: Option<u64>,
    pub timeout_ms: Option<u64>,
}

impl LlmSection {
    pub fn apply(&self, cfg: &mut BackendConfig) -> Result<()> {
        if let Some(m) = &self.mode {
            cfg.mode = m.parse()?;
        }
        if let Some(v) = &self.endpoint {
            cfg.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = &self.cassette {
            cfg.cassette = Some(v.clone());
        }
        if let Some(v) = self.requests_per_minute {
            cfg.requests_per_minute = (v > 0).then_some(v);
        }
        if let Some(v) = self.retry_base_ms {
            cfg.retry_base = std::time::Duration::from_millis(v);
        }
        if let Some(v) = self.timeout_ms {
            cfg.timeout = std::time::Duration::from_millis(v);
        }
        Ok(())
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: FileConfig = toml::from_str(
            "jobs = 2\n[geometry]\nlane_width = 3.2\n[sim.idm]\na_max = 1.0\n[llm]\nmode = \"live\"\n",
        )
        .unwrap();
        assert_eq!(cfg.jobs, Some(2));
        assert_eq!(cfg.geometry.lane_width, 3.2);
        assert_eq!(cfg.geometry.segment_length, GeometryParams::default().segment_length);
        assert_eq!(cfg.sim.idm.a_max, 1.0);
        assert_eq!(cfg.sim.dt, 0.05);
        let mut b = BackendConfig::default();
        cfg.llm.apply(&mut b).unwrap();
        assert_eq!(b.mode, crashscene::llm::LlmMode::Live);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[geometry]\nlane_wdth = 3.0\n").is_err());
    }
}
