//! Input-space gradient ascent used by the maximization phase: a fixed
//! number of fixed-size steps on
//! `x ↦ ℓ(θ; (x, y)) - γ c(x, x_anchor)`, no line search.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{grad_z_loss, loss_z, LabeledExample, Network};

/// Where the transport cost of a perturbation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSpace {
    /// `½‖g(θ_f; x) - g(θ_f; x')‖²`
    #[default]
    Semantic,
    /// `½‖x - x'‖²`
    Pixel,
}

#[derive(Debug, Clone)]
pub struct AscentTrace {
    pub example: LabeledExample,
    /// Penalized objective before the first step and after every step.
    pub objective: Vec<f64>,
}

/// Penalized objective `ℓ(x) - γ c(x, anchor)` in the given cost space.
pub fn penalized_objective(
    net: &Network,
    x: &[f64],
    anchor: &LabeledExample,
    anchor_z: &DVector<f64>,
    gamma: f64,
    space: CostSpace,
) -> Result<f64> {
    let z = net.features(x)?;
    let loss = loss_z(net.theta_c(), &z, anchor.y);
    let cost = match space {
        CostSpace::Semantic => 0.5 * (&z - anchor_z).norm_squared(),
        CostSpace::Pixel => 0.5 * x.iter().zip(&anchor.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
    };
    Ok(loss - gamma * cost)
}

/// Run `t_max` ascent steps from `example` anchored at `anchor` with the
/// semantic cost. The result carries the anchor's label.
pub fn ascend_x(
    net: &Network,
    example: &LabeledExample,
    anchor: &LabeledExample,
    gamma: f64,
    eta: f64,
    t_max: usize,
) -> Result<LabeledExample> {
    Ok(ascend_x_with(net, example, anchor, gamma, eta, t_max, CostSpace::Semantic, false)?.example)
}

#[allow(clippy::too_many_arguments)]
pub fn ascend_x_with(
    net: &Network,
    example: &LabeledExample,
    anchor: &LabeledExample,
    gamma: f64,
    eta: f64,
    t_max: usize,
    space: CostSpace,
    record: bool,
) -> Result<AscentTrace> {
    if example.y != anchor.y {
        return Err(Error::InvalidConfig(format!(
            "ascent start label {} differs from anchor label {}",
            example.y, anchor.y
        )));
    }
    if !(eta >= 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!("need η ≥ 0 and γ ≥ 0, got η={eta}, γ={gamma}")));
    }
    if t_max == 0 {
        return Err(Error::InvalidConfig("t_max must be at least 1".into()));
    }
    if anchor.y >= net.n_classes() {
        return Err(Error::LabelOutOfRange {
            label: anchor.y,
            classes: net.n_classes(),
        });
    }
    let anchor_z = net.features(&anchor.x)?;
    let y = anchor.y;
    let mut x = example.x.clone();
    let mut objective = Vec::with_capacity(if record { t_max + 1 } else { 0 });
    if record {
        objective.push(penalized_objective(net, &x, anchor, &anchor_z, gamma, space)?);
    }
    for step in 0..t_max {
        let grad = match space {
            CostSpace::Semantic => {
                net.features_and_vjp(&x, |z| grad_z_loss(net.theta_c(), z, y) - (z - &anchor_z) * gamma)?
                    .1
            }
            CostSpace::Pixel => {
                let gl = net.grad_input_loss(&LabeledExample::new(x.clone(), y))?;
                let disp = DVector::from_iterator(x.len(), x.iter().zip(&anchor.x).map(|(a, b)| a - b));
                gl - disp * gamma
            }
        };
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "input ascent",
                step,
                state: None,
            });
        }
        for (xi, gi) in x.iter_mut().zip(grad.iter()) {
            *xi += eta * gi;
        }
        if record {
            objective.push(penalized_objective(net, &x, anchor, &anchor_z, gamma, space)?);
        }
    }
    Ok(AscentTrace {
        example: LabeledExample::new(x, y),
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Architecture};

    fn net() -> Network {
        Network::init(
            &Architecture {
                input_dim: 2,
                hidden: vec![8],
                feature_dim: 4,
                n_classes: 3,
                activation: Activation::Tanh,
            },
            21,
        )
        .unwrap()
    }

    #[test]
    fn zero_step_returns_start() {
        let n = net();
        let ex = LabeledExample::new(vec![0.3, -0.4], 1);
        let out = ascend_x(&n, &ex, &ex, 1.0, 0.0, 15).unwrap();
        assert_eq!(out, ex);
    }

    #[test]
    fn label_mismatch_rejected() {
        let n = net();
        let a = LabeledExample::new(vec![0.3, -0.4], 1);
        let b = LabeledExample::new(vec![0.3, -0.4], 2);
        assert!(ascend_x(&n, &a, &b, 1.0, 0.1, 3).is_err());
        assert!(ascend_x(&n, &a, &a, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn ascent_raises_loss() {
        let n = net();
        let ex = LabeledExample::new(vec![0.5, 0.1], 0);
        let out = ascend_x(&n, &ex, &ex, 1.0, 0.5, 15).unwrap();
        assert!(n.loss(&out).unwrap() > n.loss(&ex).unwrap());
        assert_eq!(out.y, ex.y);
    }
}
