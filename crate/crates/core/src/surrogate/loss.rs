use nalgebra::{DMatrix, DVector};

use super::lipschitz::{lipschitz_constants, op_norm, LipschitzCertificate, Method};
use crate::net::{grad_z_loss, hessian_z_loss, loss_z, softmax_residual};

/// A twice-differentiable loss `z ↦ ℓ(z)` for a fixed label.
pub trait PointwiseLoss: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &DVector<f64>) -> f64;
    fn grad(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64>;
    /// Global bound on `‖∇²ℓ(z)‖` (the gradient Lipschitz constant `L1`).
    fn curvature_bound(&self) -> f64;
    /// Constants used by the bound checkers.
    fn certificate(&self) -> LipschitzCertificate;
}

/// A loss whose parameters can be perturbed, for envelope-gradient checks.
pub trait ParametricLoss: PointwiseLoss + Sized {
    fn params(&self) -> Vec<f64>;
    fn with_params(&self, params: &[f64]) -> Self;
    /// `∇_params ℓ(z)`, same ordering as [`ParametricLoss::params`].
    fn grad_params(&self, z: &DVector<f64>) -> Vec<f64>;
}

/// Softmax loss in feature space, `z ↦ -log p_y(θ_c; z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLoss {
    pub theta_c: DMatrix<f64>,
    pub label: usize,
    l_theta: f64,
}

impl SoftmaxLoss {
    pub fn new(theta_c: DMatrix<f64>, label: usize) -> Self {
        assert!(label < theta_c.ncols(), "label out of range");
        let l_theta = super::lipschitz::l_theta(&theta_c);
        Self {
            theta_c,
            label,
            l_theta,
        }
    }
}

impl PointwiseLoss for SoftmaxLoss {
    fn dim(&self) -> usize {
        self.theta_c.nrows()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        loss_z(&self.theta_c, z, self.label)
    }

    fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        grad_z_loss(&self.theta_c, z, self.label)
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        hessian_z_loss(&self.theta_c, z)
    }

    fn curvature_bound(&self) -> f64 {
        self.l_theta
    }

    fn certificate(&self) -> LipschitzCertificate {
        lipschitz_constants(&self.theta_c)
    }
}

impl ParametricLoss for SoftmaxLoss {
    /// `θ_c` row-major.
    fn params(&self) -> Vec<f64> {
        let (p, m) = self.theta_c.shape();
        (0..p).flat_map(|r| (0..m).map(move |c| (r, c))).map(|rc| self.theta_c[rc]).collect()
    }

    fn with_params(&self, params: &[f64]) -> Self {
        let (p, m) = self.theta_c.shape();
        Self::new(DMatrix::from_row_slice(p, m, params), self.label)
    }

    /// `z (p - e_y)ᵀ` row-major.
    fn grad_params(&self, z: &DVector<f64>) -> Vec<f64> {
        let r = softmax_residual(&self.theta_c.tr_mul(z), self.label);
        let (p, m) = self.theta_c.shape();
        (0..p).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| z[i] * r[j]).collect()
    }
}

/// `ℓ(z) = aᵀz + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLoss {
    pub a: DVector<f64>,
    pub b: f64,
}

impl PointwiseLoss for LinearLoss {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        self.a.dot(z) + self.b
    }

    fn grad(&self, _z: &DVector<f64>) -> DVector<f64> {
        self.a.clone()
    }

    fn hessian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.a.len(), self.a.len())
    }

    fn curvature_bound(&self) -> f64 {
        0.0
    }

    fn certificate(&self) -> LipschitzCertificate {
        let l0 = self.a.norm();
        LipschitzCertificate {
            l0,
            l1: 0.0,
            l2: 0.0,
            l_theta: 0.0,
            l0_method: Method::Analytic,
            l1_method: Method::Analytic,
            l2_method: Method::Analytic,
        }
    }
}

impl ParametricLoss for LinearLoss {
    /// `(a, b)`
    fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.a.iter().copied().collect();
        v.push(self.b);
        v
    }

    fn with_params(&self, params: &[f64]) -> Self {
        let n = self.a.len();
        Self {
            a: DVector::from_column_slice(&params[..n]),
            b: params[n],
        }
    }

    fn grad_params(&self, z: &DVector<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = z.iter().copied().collect();
        v.push(1.0);
        v
    }
}

/// `ℓ(z) = ½ zᵀAz + bᵀz` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    a: DMatrix<f64>,
    b: DVector<f64>,
    norm_a: f64,
}

impl QuadraticLoss {
    /// `A` is symmetrized on construction.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert!(a.is_square() && a.nrows() == b.len(), "shape mismatch");
        let a = (&a + a.transpose()) * 0.5;
        let norm_a = op_norm(&a);
        Self { a, b, norm_a }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
}

impl PointwiseLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.a * z)) + self.b.dot(z)
    }

    fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.a * z + &self.b
    }

    fn hessian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn curvature_bound(&self) -> f64 {
        self.norm_a
    }

    /// The gradient is unbounded, so `L0` is infinite; `L2 = 0`.
    fn certificate(&self) -> LipschitzCertificate {
        LipschitzCertificate {
            l0: f64::INFINITY,
            l1: self.norm_a,
            l2: 0.0,
            l_theta: self.norm_a,
            l0_method: Method::Unbounded,
            l1_method: Method::Analytic,
            l2_method: Method::Analytic,
        }
    }
}
