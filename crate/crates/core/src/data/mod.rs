//! Synthetic single-source domains with covariate shift.
//!
//! Points and labels are drawn first; the [`Shift`] is applied to the inputs
//! afterwards, so the label of every point is independent of the shift. Two
//! specs that differ only in their shift produce the same labels and the
//! same underlying points.

mod io;

pub use io::{dataset_from_bytes, dataset_to_bytes, read_csv, read_dataset, write_csv, write_dataset, DATASET_MAGIC, DATASET_VERSION};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::LabeledExample;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub n_classes: usize,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(dim: usize, n_classes: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        for ex in &examples {
            if ex.x.len() != dim {
                return Err(Error::dim("dataset example", dim, ex.x.len()));
            }
            if ex.y >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.y,
                    classes: n_classes,
                });
            }
            if ex.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("non-finite feature".into()));
            }
        }
        Ok(Self {
            dim,
            n_classes,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for ex in &self.examples {
            counts[ex.y] += 1;
        }
        counts
    }

    /// Round every feature through `f32`, the precision of the binary format.
    pub fn quantize_f32(&self) -> Self {
        Self {
            dim: self.dim,
            n_classes: self.n_classes,
            examples: self
                .examples
                .iter()
                .map(|ex| LabeledExample::new(ex.x.iter().map(|&v| v as f32 as f64).collect(), ex.y))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Isotropic Gaussians with means evenly spaced on a circle of radius 3
    /// in the first two coordinates.
    GaussianMixture,
    /// Two interleaved half circles; binary only.
    TwoMoons,
    /// Concentric rings of radius 1, 2, .., m.
    Rings,
}

/// Input-space covariate shift `x ↦ scale · R(rotation) x + translation + noise`.
/// The rotation acts on the first two coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shift {
    pub rotation: f64,
    /// Empty means zero.
    pub translation: Vec<f64>,
    pub scale: f64,
    pub feature_noise: f64,
}

impl Default for Shift {
    fn default() -> Self {
        Self::identity()
    }
}

impl Shift {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            translation: Vec::new(),
            scale: 1.0,
            feature_noise: 0.0,
        }
    }

    pub fn rotation(radians: f64) -> Self {
        Self {
            rotation: radians,
            ..Self::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0
            && self.translation.iter().all(|&t| t == 0.0)
            && self.scale == 1.0
            && self.feature_noise == 0.0
    }
}

/// Rotations standing in for near, mid and far target domains.
pub const SEVERITY_LADDER: [(&str, f64); 3] = [
    ("near", std::f64::consts::PI / 12.0),
    ("mid", std::f64::consts::PI / 6.0),
    ("far", std::f64::consts::PI / 3.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub generator: Generator,
    pub n_classes: usize,
    pub dim: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub shift: Shift,
    pub seed: u64,
    /// Within-class spread multiplier.
    #[serde(default = "one")]
    pub spread: f64,
}

fn one() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn gaussian_mixture(n_classes: usize, dim: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            generator: Generator::GaussianMixture,
            n_classes,
            dim,
            n_samples,
            shift: Shift::identity(),
            seed,
            spread: 1.0,
        }
    }

    pub fn with_shift(mut self, shift: Shift) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_classes > u16::MAX as usize {
            return bad(format!("at most {} classes", u16::MAX));
        }
        if self.dim < 2 {
            return bad(format!("need at least 2 input dimensions, got {}", self.dim));
        }
        if self.generator == Generator::TwoMoons && self.n_classes != 2 {
            return bad("two_moons is binary".into());
        }
        if !(self.shift.scale > 0.0) || !self.shift.scale.is_finite() {
            return bad(format!("shift scale must be positive, got {}", self.shift.scale));
        }
        if !(self.shift.feature_noise >= 0.0) {
            return bad(format!("feature noise must be ≥ 0, got {}", self.shift.feature_noise));
        }
        if !self.shift.translation.is_empty() && self.shift.translation.len() != self.dim {
            return bad(format!(
                "translation has {} entries, expected {}",
                self.shift.translation.len(),
                self.dim
            ));
        }
        if !(self.spread > 0.0) {
            return bad(format!("spread must be positive, got {}", self.spread));
        }
        Ok(())
    }
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn base_point(spec: &DomainSpec, class: usize, rng: &mut rng::Rng) -> Vec<f64> {
    use std::f64::consts::PI;
    let d = spec.dim;
    let m = spec.n_classes as f64;
    let s = spec.spread;
    let mut x = vec![0.0; d];
    match spec.generator {
        Generator::GaussianMixture => {
            let angle = 2.0 * PI * class as f64 / m;
            x[0] = 3.0 * angle.cos();
            x[1] = 3.0 * angle.sin();
            for v in &mut x {
                *v += s * normal(rng);
            }
        }
        Generator::TwoMoons => {
            let t = rng.gen_range(0.0..PI);
            let (a, b) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            x[0] = 2.0 * a;
            x[1] = 2.0 * b;
            for v in &mut x {
                *v += 0.1 * s * normal(rng);
            }
        }
        Generator::Rings => {
            let t = rng.gen_range(0.0..2.0 * PI);
            let r = (class + 1) as f64;
            x[0] = r * t.cos();
            x[1] = r * t.sin();
            for v in &mut x {
                *v += 0.1 * s * normal(rng);
            }
        }
    }
    x
}

fn apply_shift(shift: &Shift, x: &mut [f64], noise_rng: &mut rng::Rng) {
    let (sin, cos) = shift.rotation.sin_cos();
    let (a, b) = (x[0], x[1]);
    x[0] = cos * a - sin * b;
    x[1] = sin * a + cos * b;
    for (i, v) in x.iter_mut().enumerate() {
        *v *= shift.scale;
        if let Some(t) = shift.translation.get(i) {
            *v += t;
        }
        if shift.feature_noise > 0.0 {
            *v += shift.feature_noise * normal(noise_rng);
        }
    }
}

/// Draw a class-balanced dataset and apply the domain's shift.
pub fn generate(spec: &DomainSpec) -> Result<Dataset> {
    spec.validate()?;
    let m = spec.n_classes;
    let n = spec.n_samples;
    let mut labels: Vec<usize> = (0..m).flat_map(|c| std::iter::repeat_n(c, n / m + usize::from(c < n % m))).collect();
    let mut rng = rng::seeded(rng::derive(spec.seed, 0));
    labels.shuffle(&mut rng);
    let mut noise_rng = rng::seeded(rng::derive(spec.seed, 1));
    let examples = labels
        .into_iter()
        .map(|y| {
            let mut x = base_point(spec, y, &mut rng);
            apply_shift(&spec.shift, &mut x, &mut noise_rng);
            LabeledExample::new(x, y)
        })
        .collect();
    Dataset::new(spec.dim, m, examples)
}
