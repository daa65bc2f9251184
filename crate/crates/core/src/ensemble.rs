//! Ensembles over a grid of transport penalties with per-input model
//! selection.
//!
//! For each input the member with the largest maximum logit (or maximum
//! softmax probability) is chosen, and its prediction is returned. Ties go
//! to the lowest member index.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{argmax, read_model, write_model, Architecture, LabeledExample, Network};
use crate::par;
use crate::trainer::{train, TrainConfig};

/// The default penalty grid `10^{-i}`, `i = 0..=6`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=6).map(|i| 10f64.powi(-i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// `max_j θ_{c,j}ᵀ z`
    #[default]
    MaxLogit,
    /// `max_j p_j`
    MaxSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub gamma: f64,
    pub seed: u64,
    pub net: Network,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<Member>,
    pub selection: Selection,
}

impl EnsembleModel {
    /// Requires at least one member, matching shapes and distinct
    /// `(gamma, seed)` pairs.
    pub fn new(members: Vec<Member>, selection: Selection) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        };
        let (d, m) = (first.net.input_dim(), first.net.n_classes());
        for (i, a) in members.iter().enumerate() {
            if a.net.input_dim() != d || a.net.n_classes() != m {
                return Err(Error::InvalidNetwork(format!("member {i} has a different input or class count")));
            }
            if members[..i].iter().any(|b| b.gamma == a.gamma && b.seed == a.seed) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate member (gamma={}, seed={})",
                    a.gamma, a.seed
                )));
            }
        }
        Ok(Self { members, selection })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].net.input_dim()
    }

    /// Per-member selection scores at `x`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| {
                let v = match self.selection {
                    Selection::MaxLogit => m.net.logits(x)?,
                    Selection::MaxSoftmax => m.net.probs(x)?,
                };
                Ok(v.max())
            })
            .collect()
    }

    /// Index of the selected member; lowest index on ties.
    pub fn select(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    /// The selected member's predicted class.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.members[self.select(x)?].net.predict(x)
    }

    pub fn accuracy(&self, examples: &[LabeledExample]) -> Result<f64> {
        let hits = par::try_map_indexed(examples.len(), |i| Ok::<_, Error>(self.predict(&examples[i].x)? == examples[i].y))?;
        Ok(if hits.is_empty() {
            0.0
        } else {
            hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
        })
    }

    /// Write `models/member_<i>.adaw` and `manifest.json` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<EnsembleManifest> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("models"))?;
        let mut entries = Vec::with_capacity(self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            let rel = PathBuf::from("models").join(format!("member_{i}.adaw"));
            write_model(dir.join(&rel), &m.net)?;
            entries.push(ManifestMember {
                gamma: m.gamma,
                seed: m.seed,
                model: rel,
            });
        }
        let manifest = EnsembleManifest {
            selection: self.selection,
            members: entries,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Load from a manifest; relative model paths resolve against the
    /// manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let manifest: EnsembleManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let members = manifest
            .members
            .iter()
            .map(|m| {
                Ok(Member {
                    gamma: m.gamma,
                    seed: m.seed,
                    net: read_model(base.join(&m.model))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, manifest.selection)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub gamma: f64,
    pub seed: u64,
    pub model: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub selection: Selection,
    pub members: Vec<ManifestMember>,
}

/// One trainer run per grid entry with `seed = base.seed ^ index`; the
/// member network is initialized from the same derived seed.
pub fn train_ensemble(
    arch: &Architecture,
    dataset: &[LabeledExample],
    base: &TrainConfig,
    gamma_grid: &[f64],
    selection: Selection,
) -> Result<EnsembleModel> {
    let configs: Vec<TrainConfig> = gamma_grid
        .iter()
        .enumerate()
        .map(|(i, &g)| base.clone().with_gamma(g).with_seed(base.seed ^ i as u64))
        .collect();
    train_members(arch, dataset, &configs, selection)
}

/// Same-size ensemble of plain ERM models (`k = 0`, `γ = 0`) that differ
/// only in seed.
pub fn train_baseline_ensemble(
    arch: &Architecture,
    dataset: &[LabeledExample],
    base: &TrainConfig,
    size: usize,
    selection: Selection,
) -> Result<EnsembleModel> {
    let configs: Vec<TrainConfig> = (0..size)
        .map(|i| base.clone().with_rounds(0).with_gamma(0.0).with_seed(base.seed ^ i as u64))
        .collect();
    train_members(arch, dataset, &configs, selection)
}

fn train_members(
    arch: &Architecture,
    dataset: &[LabeledExample],
    configs: &[TrainConfig],
    selection: Selection,
) -> Result<EnsembleModel> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("ensemble grid is empty".into()));
    }
    let members = par::try_map_indexed(configs.len(), |i| {
        let cfg = &configs[i];
        let net0 = Network::init(arch, cfg.seed)?;
        Ok::<_, Error>(Member {
            gamma: cfg.gamma,
            seed: cfg.seed,
            net: train(&net0, dataset, cfg)?.net,
        })
    })?;
    EnsembleModel::new(members, selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Dense;
    use nalgebra::{DMatrix, DVector};

    /// Identity feature layer on R² with the given classifier.
    fn linear(theta: &[f64]) -> Network {
        let layer = Dense {
            weights: DMatrix::identity(2, 2),
            bias: DVector::zeros(2),
            activation: crate::Activation::Identity,
        };
        Network::new(vec![layer], DMatrix::from_row_slice(2, 2, theta)).unwrap()
    }

    fn member(gamma: f64, net: Network) -> Member {
        Member { gamma, seed: 0, net }
    }

    #[test]
    fn argmax_of_member_maxima() {
        let ens = EnsembleModel::new(
            vec![member(1.0, linear(&[3.0, 0.0, 0.0, 1.0])), member(0.1, linear(&[0.0, 0.0, 5.0, 0.0]))],
            Selection::MaxLogit,
        )
        .unwrap();
        // member 0 logits (3, 1), member 1 logits (5, 0)
        assert_eq!(ens.scores(&[1.0, 1.0]).unwrap(), vec![3.0, 5.0]);
        assert_eq!(ens.select(&[1.0, 1.0]).unwrap(), 1);
        assert_eq!(ens.predict(&[1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn exact_tie_picks_first() {
        let net = linear(&[1.0, 0.0, 0.0, 1.0]);
        for selection in [Selection::MaxLogit, Selection::MaxSoftmax] {
            let ens = EnsembleModel::new(vec![member(1.0, net.clone()), member(2.0, net.clone())], selection).unwrap();
            assert_eq!(ens.select(&[0.3, -0.2]).unwrap(), 0);
        }
    }

    #[test]
    fn scaling_can_flip_selection_but_not_member_prediction() {
        let a = linear(&[1.0, 0.0, 0.0, 0.8]);
        let b = linear(&[0.0, 1.5, 1.0, 0.0]);
        let x = [1.0, 1.0];
        let ens = EnsembleModel::new(vec![member(1.0, a.clone()), member(0.1, b.clone())], Selection::MaxLogit).unwrap();
        assert_eq!(ens.select(&x).unwrap(), 1);
        let mut a2 = a.clone();
        *a2.theta_c_mut() *= 2.0;
        let ens2 = EnsembleModel::new(vec![member(1.0, a2.clone()), member(0.1, b)], Selection::MaxLogit).unwrap();
        assert_eq!(ens2.scores(&x).unwrap()[0], 2.0 * ens.scores(&x).unwrap()[0]);
        assert_eq!(ens2.select(&x).unwrap(), 0);
        assert_eq!(a.predict(&x).unwrap(), a2.predict(&x).unwrap());
    }

    #[test]
    fn invariants() {
        assert!(EnsembleModel::new(vec![], Selection::MaxLogit).is_err());
        let n = linear(&[1.0, 0.0, 0.0, 1.0]);
        assert!(EnsembleModel::new(vec![member(1.0, n.clone()), member(1.0, n)], Selection::MaxLogit).is_err());
        assert_eq!(default_gamma_grid().len(), 7);
        assert_eq!(default_gamma_grid()[6], 1e-6);
    }

    #[test]
    fn manifest_round_trip() {
        let ens = EnsembleModel::new(
            vec![member(1.0, linear(&[1.0, 2.0, 3.0, 4.0])), member(0.5, linear(&[0.5, 0.0, 0.0, 1.0]))],
            Selection::MaxSoftmax,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        ens.save(dir.path()).unwrap();
        assert_eq!(EnsembleModel::load(dir.path().join("manifest.json")).unwrap(), ens);
    }
}
