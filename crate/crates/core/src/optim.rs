//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `θ ← θ - α g`
pub fn sgd_step(params: &mut [f64], grad: &[f64], alpha: f64) {
    debug_assert_eq!(params.len(), grad.len());
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= alpha * g;
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    hp: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, hp: AdamParams) -> Self {
        Self {
            hp,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], alpha: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        let AdamParams { beta1, beta2, eps } = self.hp;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Optimizer state for one minimization phase.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n: usize, hp: AdamParams) -> Self {
        match kind {
            OptimizerKind::Adam => Self::Adam(Adam::new(n, hp)),
            OptimizerKind::Sgd => Self::Sgd,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], alpha: f64) {
        match self {
            Self::Adam(a) => a.step(params, grad, alpha),
            Self::Sgd => sgd_step(params, grad, alpha),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_has_size_alpha() {
        let mut adam = Adam::new(3, AdamParams::default());
        let mut p = vec![1.0, 1.0, 1.0];
        adam.step(&mut p, &[0.5, -2.0, 1e3], 0.01);
        for (x, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - (1.0 + s * 0.01)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut p = vec![0.3, -0.2];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 2, AdamParams::default());
        opt.step(&mut p, &[1.0, 1.0], 0.0);
        sgd_step(&mut p, &[1.0, 1.0], 0.0);
        assert_eq!(p, vec![0.3, -0.2]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut adam = Adam::new(2, AdamParams::default());
        for _ in 0..2000 {
            let g = p.clone();
            adam.step(&mut p, &g, 0.05);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
