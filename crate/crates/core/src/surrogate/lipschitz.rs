//! Smoothness constants of the softmax loss in feature space.
//!
//! With `∇_z ℓ = -θ_{c,y} + Σ_j p_j θ_{c,j}`:
//! - `L0 = 2 max_j ‖θ_{c,j}‖` bounds the gradient norm,
//! - `L(θ) = 2 max_j ‖θ_{c,j}‖ Σ_j ‖θ_{c,j}‖` bounds the gradient's
//!   Lipschitz constant (so `L1 = L(θ)`),
//! - the Hessian Lipschitz constant `L2` has no closed form here and is
//!   estimated from random pairs, then multiplied by a safety factor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::net::hessian_z_loss;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    EmpiricalTimesSafety,
    Override,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzCertificate {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l_theta: f64,
    pub l0_method: Method,
    pub l1_method: Method,
    pub l2_method: Method,
}

impl LipschitzCertificate {
    /// Replace the empirical `L2` with a caller-supplied bound.
    pub fn with_l2_override(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self.l2_method = Method::Override;
        self
    }
}

/// Sampling plan for the empirical Hessian-Lipschitz estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Estimate {
    pub pairs: usize,
    pub seed: u64,
    pub safety: f64,
}

impl Default for L2Estimate {
    fn default() -> Self {
        Self {
            pairs: 10_000,
            seed: 0x4C32,
            safety: 2.0,
        }
    }
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn column_norms(theta_c: &DMatrix<f64>) -> Vec<f64> {
    theta_c.column_iter().map(|c| c.norm()).collect()
}

/// `2 max_j ‖θ_{c,j}‖`
pub fn l0_bound(theta_c: &DMatrix<f64>) -> f64 {
    2.0 * column_norms(theta_c).into_iter().fold(0.0, f64::max)
}

/// `L(θ) = 2 max_j ‖θ_{c,j}‖ Σ_j ‖θ_{c,j}‖`
pub fn l_theta(theta_c: &DMatrix<f64>) -> f64 {
    let norms = column_norms(theta_c);
    2.0 * norms.iter().copied().fold(0.0, f64::max) * norms.iter().sum::<f64>()
}

/// Spectral norm of a symmetric matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.amax()
}

/// Largest observed `‖H(z) - H(z')‖ / ‖z - z'‖` over random pairs, before
/// any safety factor. Centers are drawn at the logit scale of `θ_c` and
/// partners at a fraction of it, so both the balanced and saturated regimes
/// are visited.
pub fn empirical_hessian_lipschitz(theta_c: &DMatrix<f64>, pairs: usize, seed: u64) -> f64 {
    let p = theta_c.nrows();
    let scale = 1.0 / (0.5 * l0_bound(theta_c)).max(1e-12);
    let mut rng = rng::seeded(seed);
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let spread = scale * rng.gen_range(0.0..4.0);
        let z = DVector::from_fn(p, |_, _| spread * normal(&mut rng));
        let mut u = DVector::from_fn(p, |_, _| normal(&mut rng));
        let un = u.norm();
        if un == 0.0 {
            continue;
        }
        u /= un;
        let r = scale * 10f64.powf(rng.gen_range(-3.0..0.0));
        let z2 = &z + &u * r;
        let diff = hessian_z_loss(theta_c, &z) - hessian_z_loss(theta_c, &z2);
        let ratio = op_norm(&diff) / (&z - &z2).norm();
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    best
}

pub fn lipschitz_constants_with(theta_c: &DMatrix<f64>, plan: L2Estimate) -> LipschitzCertificate {
    let lt = l_theta(theta_c);
    LipschitzCertificate {
        l0: l0_bound(theta_c),
        l1: lt,
        l2: plan.safety * empirical_hessian_lipschitz(theta_c, plan.pairs, plan.seed),
        l_theta: lt,
        l0_method: Method::Analytic,
        l1_method: Method::Analytic,
        l2_method: Method::EmpiricalTimesSafety,
    }
}

/// Constants for the softmax loss with the default `L2` sampling plan
/// (10⁴ pairs, safety factor 2).
pub fn lipschitz_constants(theta_c: &DMatrix<f64>) -> LipschitzCertificate {
    lipschitz_constants_with(theta_c, L2Estimate::default())
}
