#![allow(dead_code)]

use advaug_core::net::loss_z;
use nalgebra::{DMatrix, DVector};

/// `sup_z ℓ(z) - (γ/2)‖z - z0‖²` over R² by repeated grid refinement,
/// independent of the Newton solver. Valid for strongly concave objectives,
/// where the maximizer stays inside every refined box.
pub fn grid_search_phi(theta: &DMatrix<f64>, z0: &DVector<f64>, y: usize, gamma: f64) -> (f64, DVector<f64>) {
    assert_eq!(z0.len(), 2);
    let h = |z: &DVector<f64>| loss_z(theta, z, y) - 0.5 * gamma * (z - z0).norm_squared();
    // ‖z* - z0‖ ≤ ‖∇ℓ‖∞ / (γ - L) and ‖∇ℓ‖ ≤ 2 max‖θ_j‖
    let max_col = theta.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut half = 4.0 * max_col / gamma + 1e-3;
    let mut center = z0.clone();
    let n = 40;
    let mut best = (h(&center), center.clone());
    while half > 1e-10 {
        for i in 0..=n {
            for j in 0..=n {
                let z = DVector::from_vec(vec![
                    center[0] - half + 2.0 * half * i as f64 / n as f64,
                    center[1] - half + 2.0 * half * j as f64 / n as f64,
                ]);
                let v = h(&z);
                if v > best.0 {
                    best = (v, z);
                }
            }
        }
        center = best.1.clone();
        half /= 8.0;
    }
    best
}
