//! Numerical checkers for the feature-space perturbation bounds.
//!
//! Each checker solves the inner problem to a certified tolerance, evaluates
//! both sides of an inequality, and reports them with the constants used.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lipschitz::{l_theta, LipschitzCertificate};
use super::loss::{ParametricLoss, PointwiseLoss, SoftmaxLoss};
use super::solver::{maximize_z_exact, newton_proxy, SurrogateResult};
use crate::error::{Error, Result};
use crate::gradcheck::{central_diff, relative_error};
use crate::net::{data_dependent_regularizer, LabeledExample, Network};

/// Inner tolerance for the sandwich and envelope checks.
pub const DIAGNOSTIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub check: &'static str,
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub epsilon: f64,
    pub constants: LipschitzCertificate,
}

/// Right-hand side of the Newton-proxy distance bound.
pub fn newton_bound_rhs(c: &LipschitzCertificate, gamma: f64, epsilon: f64) -> f64 {
    let slack = gamma - c.l1;
    let mut rhs = 2.0 * epsilon / slack;
    if c.l2 > 0.0 {
        let cubes = (5.0 * c.l0 / gamma).powi(3) + (c.l0 / slack).powi(3) + (2.0 * epsilon / gamma).powf(1.5);
        rhs += c.l2 / (3.0 * slack) * cubes;
    }
    rhs
}

/// Right-hand side of the first-order-step distance bound.
pub fn displacement_bound_rhs(c: &LipschitzCertificate, gamma: f64, epsilon: f64) -> f64 {
    4.0 * c.l0 / gamma + (2.0 * epsilon / gamma).sqrt()
}

/// `‖z*_ε - ĝ_newton‖² ≤ 2ε/(γ-L1) + L2/(3(γ-L1)) {(5L0/γ)³ + (L0/(γ-L1))³ + (2ε/γ)^{3/2}}`
pub fn check_newton_bound_with<L: PointwiseLoss + ?Sized>(
    loss: &L,
    constants: &LipschitzCertificate,
    z0: &DVector<f64>,
    gamma: f64,
    tol: f64,
) -> Result<BoundReport> {
    let sol = maximize_z_exact(loss, z0, gamma, tol)?;
    let proxy = newton_proxy(loss, z0, gamma)?;
    let lhs = (sol.z_star() - proxy).norm_squared();
    let rhs = newton_bound_rhs(constants, gamma, sol.epsilon_cert);
    Ok(BoundReport {
        check: "newton",
        gamma,
        lhs,
        rhs,
        pass: lhs <= rhs,
        epsilon: sol.epsilon_cert,
        constants: constants.clone(),
    })
}

pub fn check_newton_bound<L: PointwiseLoss + ?Sized>(loss: &L, z0: &DVector<f64>, gamma: f64, tol: f64) -> Result<BoundReport> {
    check_newton_bound_with(loss, &loss.certificate(), z0, gamma, tol)
}

/// `‖z*_ε - z0 - ∇ℓ(z0)/γ‖ ≤ 4L0/γ + √(2ε/γ)`
pub fn check_displacement_bound_with<L: PointwiseLoss + ?Sized>(
    loss: &L,
    constants: &LipschitzCertificate,
    z0: &DVector<f64>,
    gamma: f64,
    tol: f64,
) -> Result<BoundReport> {
    let sol = maximize_z_exact(loss, z0, gamma, tol)?;
    let first_order = z0 + loss.grad(z0) / gamma;
    let lhs = (sol.z_star() - first_order).norm();
    let rhs = displacement_bound_rhs(constants, gamma, sol.epsilon_cert);
    Ok(BoundReport {
        check: "displacement",
        gamma,
        lhs,
        rhs,
        pass: lhs <= rhs,
        epsilon: sol.epsilon_cert,
        constants: constants.clone(),
    })
}

pub fn check_displacement_bound<L: PointwiseLoss + ?Sized>(loss: &L, z0: &DVector<f64>, gamma: f64, tol: f64) -> Result<BoundReport> {
    check_displacement_bound_with(loss, &loss.certificate(), z0, gamma, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub gamma: f64,
    pub l_theta: f64,
    /// `‖θ_{c,y} - Σ_j p_j θ_{c,j}‖²`
    pub regularizer: f64,
    /// `φ_γ - ℓ`
    pub gap: f64,
    pub epsilon: f64,
    /// `R / (2(γ + L))`
    pub lower: f64,
    /// `R / (2(γ - L))`
    pub upper: f64,
    /// `R / (γ - L)`
    pub upper_stated: f64,
    /// `R / (γ + L)`; recorded only, not part of `pass`.
    pub lower_stated: f64,
    pub lower_stated_holds: bool,
    pub pass: bool,
}

/// Solve `φ_γ - ℓ` for the softmax loss and compare it with the
/// regularizer window `[R/(2(γ+L)), R/(2(γ-L))]` and the looser `R/(γ-L)`.
pub fn check_sandwich(theta_c: &DMatrix<f64>, z: &DVector<f64>, y: usize, gamma: f64) -> Result<SandwichReport> {
    if z.len() != theta_c.nrows() {
        return Err(Error::dim("sandwich features", theta_c.nrows(), z.len()));
    }
    let l = l_theta(theta_c);
    if !(gamma > l) {
        return Err(Error::Curvature { gamma, curvature: l });
    }
    let loss = SoftmaxLoss::new(theta_c.clone(), y);
    let sol = maximize_z_exact(&loss, z, gamma, DIAGNOSTIC_TOL)?;
    Ok(sandwich_from(&sol, data_dependent_regularizer(theta_c, z, y), l))
}

pub(crate) fn sandwich_from(sol: &SurrogateResult, r: f64, l: f64) -> SandwichReport {
    let gamma = sol.gamma;
    let gap = sol.gap();
    let eps = sol.epsilon_cert;
    // the computed gap is within [true - ε, true]; allow rounding of h - ℓ
    let rounding = 8.0 * f64::EPSILON * (1.0 + sol.loss.abs());
    let lower = r / (2.0 * (gamma + l));
    let upper = r / (2.0 * (gamma - l));
    let upper_stated = r / (gamma - l);
    let lower_stated = r / (gamma + l);
    let pass = lower <= gap + eps + rounding && gap <= upper + rounding && gap <= upper_stated + rounding;
    SandwichReport {
        gamma,
        l_theta: l,
        regularizer: r,
        gap,
        epsilon: eps,
        lower,
        upper,
        upper_stated,
        lower_stated,
        lower_stated_holds: lower_stated <= gap + eps + rounding,
        pass,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub gamma: f64,
    /// `∇_params ℓ(z*)`
    pub analytic: Vec<f64>,
    /// central differences of `params ↦ φ_γ`
    pub numeric: Vec<f64>,
    pub rel_error: f64,
}

/// Compare `∇_params ℓ` at the inner maximizer with central differences of
/// the surrogate value, re-solving the inner problem per perturbation.
pub fn envelope_check<L: ParametricLoss>(loss: &L, z0: &DVector<f64>, gamma: f64, step: f64) -> Result<EnvelopeReport> {
    let tight = DIAGNOSTIC_TOL * 1e-2;
    let sol = maximize_z_exact(loss, z0, gamma, tight)?;
    let analytic = loss.grad_params(&sol.z_star());
    let mut failure = None;
    let numeric = central_diff(
        |params| match maximize_z_exact(&loss.with_params(params), z0, gamma, tight) {
            Ok(s) => s.phi,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &loss.params(),
        step,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(EnvelopeReport {
        gamma,
        rel_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
    })
}

/// Envelope check on the classification-layer weights of `net` at the
/// features of `example`. Requires `γ > L(θ)`.
pub fn envelope_grad_check(net: &Network, example: &LabeledExample, gamma: f64) -> Result<EnvelopeReport> {
    let l = l_theta(net.theta_c());
    if !(gamma > l) {
        return Err(Error::Curvature { gamma, curvature: l });
    }
    if example.y >= net.n_classes() {
        return Err(Error::LabelOutOfRange {
            label: example.y,
            classes: net.n_classes(),
        });
    }
    let z0 = net.features(&example.x)?;
    let loss = SoftmaxLoss::new(net.theta_c().clone(), example.y);
    envelope_check(&loss, &z0, gamma, crate::gradcheck::DEFAULT_STEP)
}
