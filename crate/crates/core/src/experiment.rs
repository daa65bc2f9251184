//! Experiment configuration: source domain, held-out splits, target shifts,
//! architecture and training settings in one JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{generate, Dataset, DomainSpec, Shift, SEVERITY_LADDER};
use crate::ensemble::{default_gamma_grid, Selection};
use crate::error::{Error, Result};
use crate::net::{Activation, Architecture};
use crate::rng;
use crate::trainer::TrainConfig;

pub const PRESETS: [&str; 2] = ["default", "identity-shift"];

const TEST_STREAM: u64 = 0x7E57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDomain {
    pub name: String,
    pub shift: Shift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    #[serde(default = "tanh")]
    pub activation: Activation,
}

fn tanh() -> Activation {
    Activation::Tanh
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            feature_dim: 16,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Training split of the source domain.
    pub source: DomainSpec,
    /// Size of the held-out source split and of every target split.
    pub n_test: usize,
    #[serde(default)]
    pub targets: Vec<TargetDomain>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default)]
    pub selection: Selection,
}

impl ExperimentConfig {
    /// Three-class Gaussian mixture in 2-D with the near, mid and far
    /// rotations as targets.
    pub fn default_toy() -> Self {
        Self {
            source: DomainSpec::gaussian_mixture(3, 2, 600, 0),
            n_test: 600,
            targets: SEVERITY_LADDER
                .iter()
                .map(|&(name, angle)| TargetDomain {
                    name: name.into(),
                    shift: Shift::rotation(angle),
                })
                .collect(),
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            gamma_grid: default_gamma_grid(),
            selection: Selection::MaxLogit,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_toy()),
            "identity-shift" => {
                let mut cfg = Self::default_toy();
                cfg.targets = vec![TargetDomain {
                    name: "identity".into(),
                    shift: Shift::identity(),
                }];
                Some(cfg)
            }
            _ => None,
        }
    }

    /// A preset name or a path to a JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(name_or_path) {
            return Ok(cfg);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::InvalidConfig(format!(
                "{name_or_path:?} is neither a preset ({}) nor an existing file",
                PRESETS.join(", ")
            )));
        }
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.train.validate()?;
        for t in &self.targets {
            self.source.clone().with_shift(t.shift.clone()).validate()?;
        }
        if self.network.feature_dim == 0 || self.network.hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.gamma_grid.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidConfig("gamma grid entries must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.source.dim,
            hidden: self.network.hidden.clone(),
            feature_dim: self.network.feature_dim,
            n_classes: self.source.n_classes,
            activation: self.network.activation,
        }
    }

    fn held_out_spec(&self, shift: Shift) -> DomainSpec {
        let mut spec = self.source.clone().with_shift(shift);
        spec.n_samples = self.n_test;
        spec.seed = rng::derive(self.source.seed, TEST_STREAM);
        spec
    }

    pub fn source_train(&self) -> Result<Dataset> {
        generate(&self.source)
    }

    /// Held-out source split; its points come from a different seed than the
    /// training split.
    pub fn source_test(&self) -> Result<Dataset> {
        generate(&self.held_out_spec(self.source.shift.clone()))
    }

    /// Target splits share the held-out seed, so each is the source test
    /// split moved by the target shift.
    pub fn target(&self, name: &str) -> Result<Dataset> {
        let t = self
            .targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no target named {name:?}")))?;
        generate(&self.held_out_spec(t.shift.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_validate() {
        for name in PRESETS {
            let cfg = ExperimentConfig::resolve(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::resolve("no-such-preset").is_err());
    }

    #[test]
    fn identity_target_equals_source_test() {
        let cfg = ExperimentConfig::preset("identity-shift").unwrap();
        assert_eq!(cfg.target("identity").unwrap(), cfg.source_test().unwrap());
        assert_ne!(cfg.source_test().unwrap(), cfg.source_train().unwrap());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::default_toy();
        let s = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), cfg);
    }
}
