//! Run manifests: everything needed to repeat a command.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use advaug_core::experiment::ExperimentConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved config, after presets and command-line overrides.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub serial: bool,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Seconds since the Unix epoch.
    pub started_unix: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<f64>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, inputs: Vec<PathBuf>, out: &Path) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            seed: config.train.seed,
            serial: advaug_core::par::is_serial(),
            inputs,
            out: out.to_path_buf(),
            started_unix: now(),
            finished_unix: None,
        }
    }

    /// Write to `<out>/run.json`, creating `out` if needed.
    pub fn write(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.finished_unix = Some(now());
        self.write()
    }

    /// Parses `s` as a manifest if it looks like one.
    pub fn parse(s: &str) -> Option<Self> {
        let v: serde_json::Value = serde_json::from_str(s).ok()?;
        if v.get("tool").is_some() && v.get("config").is_some() {
            serde_json::from_value(v).ok()
        } else {
            None
        }
    }
}

/// A preset name, an experiment config file, or a run manifest (whose
/// config snapshot is used).
pub fn resolve_config(name_or_path: &str) -> Result<ExperimentConfig> {
    if ExperimentConfig::preset(name_or_path).is_none() {
        if let Ok(text) = std::fs::read_to_string(name_or_path) {
            if let Some(m) = RunManifest::parse(&text) {
                m.config.validate()?;
                return Ok(m.config);
            }
        }
    }
    Ok(ExperimentConfig::resolve(name_or_path)?)
}
