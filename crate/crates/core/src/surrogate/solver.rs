//! Feature-space inner maximization
//! `φ_γ(z0) = sup_z { ℓ(z) - (γ/2)‖z - z0‖² }` and its Newton proxy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lipschitz::op_norm;
use super::loss::PointwiseLoss;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 200;
const MAX_HALVINGS: usize = 60;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateResult {
    pub z_star: Vec<f64>,
    /// `h(z_star)`, within `epsilon_cert` of `φ_γ`.
    pub phi: f64,
    /// `ℓ(z0)`.
    pub loss: f64,
    pub gamma: f64,
    pub ascent_steps: usize,
    /// Suboptimality certified by strong concavity, `tol² / (2(γ - L1))`.
    pub epsilon_cert: f64,
    /// `‖∇h(z_star)‖`
    pub grad_norm: f64,
}

impl SurrogateResult {
    pub fn z_star(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z_star)
    }

    /// `φ_γ - ℓ`
    pub fn gap(&self) -> f64 {
        self.phi - self.loss
    }
}

fn objective<L: PointwiseLoss + ?Sized>(loss: &L, z: &DVector<f64>, z0: &DVector<f64>, gamma: f64) -> f64 {
    loss.value(z) - 0.5 * gamma * (z - z0).norm_squared()
}

fn objective_grad<L: PointwiseLoss + ?Sized>(
    loss: &L,
    z: &DVector<f64>,
    z0: &DVector<f64>,
    gamma: f64,
) -> DVector<f64> {
    loss.grad(z) - (z - z0) * gamma
}

/// `(γI - H)⁻¹ g`, by Cholesky when `γI - H` is positive definite.
fn regularized_solve(h: &DMatrix<f64>, g: &DVector<f64>, gamma: f64) -> Option<DVector<f64>> {
    let n = g.len();
    let m = DMatrix::identity(n, n) * gamma - h;
    m.cholesky().map(|c| c.solve(g))
}

/// Damped Newton ascent on the strongly concave `h(z) = ℓ(z) - (γ/2)‖z - z0‖²`
/// until `‖∇h‖ ≤ tol`, falling back to gradient steps when the Newton
/// direction is unusable.
///
/// Iterates never drop below `h(z0) = ℓ(z0)`, so the returned `phi` is at
/// least the unperturbed loss.
pub fn maximize_z_exact<L: PointwiseLoss + ?Sized>(
    loss: &L,
    z0: &DVector<f64>,
    gamma: f64,
    tol: f64,
) -> Result<SurrogateResult> {
    if z0.len() != loss.dim() {
        return Err(Error::dim("surrogate anchor", loss.dim(), z0.len()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let l1 = loss.curvature_bound();
    if !(gamma > l1) {
        return Err(Error::Curvature {
            gamma,
            curvature: l1,
        });
    }

    let loss0 = loss.value(z0);
    let mut z = z0.clone();
    let mut h = loss0;
    let mut g = objective_grad(loss, &z, z0, gamma);
    let mut gn = g.norm();
    let mut steps = 0;

    while gn > tol {
        if steps >= MAX_ITERS {
            return Err(Error::NonConvergence {
                iterations: steps,
                grad_norm: gn,
                last: z.iter().copied().collect(),
            });
        }
        steps += 1;

        let newton = regularized_solve(&loss.hessian(&z), &g, gamma).filter(|d| d.dot(&g) > 0.0);
        let gradient = &g / (gamma + l1);
        let mut accepted = None;
        for dir in newton.iter().chain(std::iter::once(&gradient)) {
            let slope = dir.dot(&g);
            let mut t = 1.0;
            for _ in 0..MAX_HALVINGS {
                let zn = &z + dir * t;
                let hn = objective(loss, &zn, z0, gamma);
                if hn >= h + ARMIJO * t * slope {
                    accepted = Some((zn, hn));
                    break;
                }
                // Near the optimum the increase is below rounding; accept any
                // step that still reduces the gradient without falling
                // below the anchor value.
                let rounding = 4.0 * f64::EPSILON * (1.0 + h.abs());
                if hn >= h - rounding && hn >= loss0 {
                    let gn_new = objective_grad(loss, &zn, z0, gamma).norm();
                    if gn_new < gn {
                        accepted = Some((zn, hn));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((zn, hn)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: steps,
                grad_norm: gn,
                last: z.iter().copied().collect(),
            });
        };
        z = zn;
        h = hn;
        g = objective_grad(loss, &z, z0, gamma);
        gn = g.norm();
        if !gn.is_finite() || !h.is_finite() {
            return Err(Error::NonFinite {
                context: "inner maximization",
                step: steps,
                state: None,
            });
        }
    }

    assert!(h >= loss0, "surrogate {h} below unperturbed loss {loss0}");
    Ok(SurrogateResult {
        z_star: z.iter().copied().collect(),
        phi: h,
        loss: loss0,
        gamma,
        ascent_steps: steps,
        epsilon_cert: tol * tol / (2.0 * (gamma - l1)),
        grad_norm: gn,
    })
}

/// `z0 + (1/γ)(I - (1/γ)∇²ℓ(z0))⁻¹ ∇ℓ(z0)`, the Tikhonov-regularized Newton
/// step, computed by a dense solve.
pub fn newton_proxy<L: PointwiseLoss + ?Sized>(loss: &L, z0: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if z0.len() != loss.dim() {
        return Err(Error::dim("newton proxy anchor", loss.dim(), z0.len()));
    }
    let h = loss.hessian(z0);
    let curvature = op_norm(&h);
    if !(gamma > curvature) {
        return Err(Error::Curvature { gamma, curvature });
    }
    let step = regularized_solve(&h, &loss.grad(z0), gamma).ok_or(Error::Curvature { gamma, curvature })?;
    Ok(z0 + step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::loss::{LinearLoss, QuadraticLoss, SoftmaxLoss};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn linear_completes_the_square() {
        let loss = LinearLoss { a: v(&[1.0, -2.0]), b: 0.5 };
        let z0 = v(&[0.3, 0.7]);
        let gamma = 4.0;
        let r = maximize_z_exact(&loss, &z0, gamma, 1e-12).unwrap();
        let expected = &z0 + &loss.a / gamma;
        assert!((r.z_star() - expected).norm() < 1e-12);
        let phi = loss.a.dot(&z0) + 0.5 + loss.a.norm_squared() / (2.0 * gamma);
        assert!((r.phi - phi).abs() < 1e-12);
    }

    #[test]
    fn quadratic_first_order_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let b = v(&[0.2, -0.1]);
        let loss = QuadraticLoss::new(a.clone(), b.clone());
        let z0 = v(&[1.0, 2.0]);
        let gamma = 5.0;
        let r = maximize_z_exact(&loss, &z0, gamma, 1e-12).unwrap();
        let m = DMatrix::identity(2, 2) * gamma - &a;
        let expected = &z0 + m.lu().solve(&(&a * &z0 + &b)).unwrap();
        assert!((r.z_star() - &expected).norm() < 1e-12);
        let proxy = newton_proxy(&loss, &z0, gamma).unwrap();
        assert!((proxy - expected).norm() < 1e-12);
    }

    #[test]
    fn newton_proxy_of_linear_is_gradient_step() {
        let loss = LinearLoss { a: v(&[3.0, 1.0, -1.0]), b: 0.0 };
        let z0 = v(&[0.0, 1.0, 2.0]);
        let p = newton_proxy(&loss, &z0, 10.0).unwrap();
        assert!((p - (&z0 + &loss.a / 10.0)).norm() < 1e-15);
    }

    #[test]
    fn curvature_precondition() {
        let loss = SoftmaxLoss::new(DMatrix::identity(2, 2), 0);
        let z0 = v(&[0.0, 0.0]);
        assert!(matches!(maximize_z_exact(&loss, &z0, 4.0, 1e-10), Err(Error::Curvature { .. })));
        let q = QuadraticLoss::new(DMatrix::identity(2, 2) * 3.0, v(&[0.0, 0.0]));
        assert!(matches!(newton_proxy(&q, &z0, 2.0), Err(Error::Curvature { .. })));
        assert!(maximize_z_exact(&loss, &z0, 8.0, 0.0).is_err());
    }

    #[test]
    fn saturated_prediction_has_no_gap() {
        let loss = SoftmaxLoss::new(DMatrix::identity(2, 2), 0);
        let z0 = v(&[60.0, 0.0]);
        let r = maximize_z_exact(&loss, &z0, 8.0, 1e-10).unwrap();
        assert!(r.gap() >= 0.0 && r.gap() < 1e-20);
        assert_eq!(r.ascent_steps, 0);
    }

    #[test]
    fn surrogate_dominates_loss() {
        let theta = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.2, 0.3, 0.9, -1.1]);
        let loss = SoftmaxLoss::new(theta, 2);
        let gamma = 2.0 * loss.curvature_bound();
        let r = maximize_z_exact(&loss, &v(&[0.4, -0.2]), gamma, 1e-10).unwrap();
        assert!(r.phi > r.loss);
        assert!(r.grad_norm <= 1e-10);
    }
}
