//! Central-difference gradient checking for the analytic derivatives in
//! [`crate::net`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;
use crate::net::{grad_z_loss, hessian_z_loss, loss_z, LabeledExample, Network};

/// Step used by every check unless a caller overrides it.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`], so vanishing gradients are
/// compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff<F>(mut f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `‖a - b‖₂ / max(‖a‖₂, ‖b‖₂, RELATIVE_FLOOR)`
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Relative error of `∇_z ℓ`.
    pub z_rel: f64,
    /// Relative error of `∇_x ℓ`.
    pub x_rel: f64,
    /// Relative error of the full parameter gradient.
    pub theta_rel: f64,
    /// Max entrywise absolute error of `∇_zz ℓ` against differenced gradients.
    pub hessian_abs: f64,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.z_rel.max(self.x_rel).max(self.theta_rel)
    }
}

/// Finite-difference Hessian of the softmax loss from differenced analytic
/// gradients, symmetrized.
pub fn fd_hessian_z(theta_c: &DMatrix<f64>, z: &DVector<f64>, y: usize, step: f64) -> DMatrix<f64> {
    let p = z.len();
    let mut h = DMatrix::zeros(p, p);
    let mut probe = z.clone();
    for i in 0..p {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = grad_z_loss(theta_c, &probe, y);
        probe[i] = orig - step;
        let down = grad_z_loss(theta_c, &probe, y);
        probe[i] = orig;
        h.set_column(i, &((up - down) / (2.0 * step)));
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// Check every analytic derivative of `net` at `example`.
pub fn check_network(net: &Network, example: &LabeledExample, step: f64) -> Result<GradCheckReport> {
    let theta_c = net.theta_c();
    let z = net.features(&example.x)?;
    let y = example.y;

    let gz = grad_z_loss(theta_c, &z, y);
    let gz_fd = central_diff(|v| loss_z(theta_c, &DVector::from_column_slice(v), y), z.as_slice(), step);

    let gx = net.grad_input_loss(example)?;
    let gx_fd = central_diff(
        |v| {
            net.loss(&LabeledExample::new(v.to_vec(), y))
                .expect("shape checked above")
        },
        &example.x,
        step,
    );

    let (_, gtheta) = net.grad_params_loss(example)?;
    let mut probe = net.clone();
    let gtheta_fd = central_diff(
        |v| {
            probe.set_flat_params(v).expect("same length");
            probe.loss(example).expect("shape checked above")
        },
        &net.flat_params(),
        step,
    );

    let h = hessian_z_loss(theta_c, &z);
    let h_fd = fd_hessian_z(theta_c, &z, y, step);

    Ok(GradCheckReport {
        z_rel: relative_error(gz.as_slice(), &gz_fd),
        x_rel: relative_error(gx.as_slice(), &gx_fd),
        theta_rel: relative_error(&gtheta.flatten(), &gtheta_fd),
        hessian_abs: (h - h_fd).abs().max(),
    })
}
