//! Label-aware transport cost and exact discrete transport oracles.
//!
//! Moving mass costs `½‖z - z'‖²` between points with the same label and is
//! forbidden across labels. Forbidden moves are represented by
//! [`TransportCost::Infeasible`] and removed from the optimization entirely
//! rather than encoded as a float infinity.

mod flow;
pub mod lp;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::net::Network;

pub use flow::{transport, FlowSolution};

/// Largest support handled by the exact oracles.
pub const MAX_ATOMS: usize = 64;

const WEIGHT_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportCost {
    Finite(f64),
    Infeasible,
}

impl TransportCost {
    pub fn value(self) -> Option<f64> {
        match self {
            TransportCost::Finite(v) => Some(v),
            TransportCost::Infeasible => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, TransportCost::Finite(_))
    }
}

/// A labeled point in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub z: DVector<f64>,
    pub y: usize,
}

impl Atom {
    pub fn new(z: DVector<f64>, y: usize) -> Self {
        Self { z, y }
    }
}

/// Finitely supported distribution over labeled feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Atom>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].z.len();
        if let Some(a) = atoms.iter().find(|a| a.z.len() != dim) {
            return Err(Error::dim("distribution atom", dim, a.z.len()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    /// Uniform weights over `atoms`.
    pub fn uniform(atoms: Vec<Atom>) -> Result<Self> {
        let n = atoms.len();
        let w = vec![1.0 / n.max(1) as f64; n];
        Self::new(atoms, w)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].z.len()
    }

    /// Same weights, every atom scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(&a.z * s, a.y))
                .collect(),
            weights: self.weights.clone(),
        }
    }
}

/// `c((z,y),(z',y')) = ½‖z - z'‖²` if `y = y'`, infeasible otherwise.
pub fn cost(z: &DVector<f64>, y: usize, z2: &DVector<f64>, y2: usize) -> Result<TransportCost> {
    if z.len() != z2.len() {
        return Err(Error::dim("transport cost", z.len(), z2.len()));
    }
    if y != y2 {
        return Ok(TransportCost::Infeasible);
    }
    Ok(TransportCost::Finite(0.5 * (z - z2).norm_squared()))
}

/// The transport cost measured on the network's features.
pub fn cost_theta(net: &Network, x: &[f64], y: usize, x2: &[f64], y2: usize) -> Result<TransportCost> {
    cost(&net.features(x)?, y, &net.features(x2)?, y2)
}

fn cost_matrix(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<Vec<Vec<Option<f64>>>> {
    p.atoms
        .iter()
        .map(|a| {
            q.atoms
                .iter()
                .map(|b| cost(&a.z, a.y, &b.z, b.y).map(TransportCost::value))
                .collect()
        })
        .collect()
}

fn check_pair(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::dim("wasserstein", p.dim(), q.dim()));
    }
    if p.len() > MAX_ATOMS || q.len() > MAX_ATOMS {
        return Err(Error::InvalidDistribution(format!(
            "support larger than {MAX_ATOMS} atoms"
        )));
    }
    Ok(())
}

/// Exact optimal transport value `inf_M E_M[c]` by min-cost flow.
/// Infeasible when some label's masses differ between `p` and `q`.
pub fn wasserstein(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<TransportCost> {
    check_pair(p, q)?;
    let costs = cost_matrix(p, q)?;
    let sol = transport(&p.weights, &q.weights, &costs)?;
    if sol.shipped < 1.0 - MASS_TOL {
        return Ok(TransportCost::Infeasible);
    }
    Ok(TransportCost::Finite(sol.cost.max(0.0)))
}

/// The same value as [`wasserstein`], solved as a dense linear program over
/// the coupling matrix. Independent route used for cross-checking.
pub fn wasserstein_lp(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<TransportCost> {
    check_pair(p, q)?;
    let costs = cost_matrix(p, q)?;
    let arcs: Vec<(usize, usize, f64)> = costs
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(j, c)| c.map(|c| (i, j, c))))
        .collect();
    let (n, m) = (p.len(), q.len());
    let mut a = vec![vec![0.0; arcs.len()]; n + m];
    for (k, &(i, j, _)) in arcs.iter().enumerate() {
        a[i][k] = 1.0;
        a[n + j][k] = 1.0;
    }
    let mut b = p.weights.clone();
    b.extend(&q.weights);
    let c = arcs.iter().map(|&(_, _, c)| -c).collect();
    match lp::maximize(&lp::LinearProgram { a, b, c }) {
        Ok(sol) => Ok(TransportCost::Finite((-sol.value).max(0.0))),
        Err(Error::Lp(msg)) if msg.starts_with("infeasible") => Ok(TransportCost::Infeasible),
        Err(e) => Err(e),
    }
}

/// `sup_P { E_P[ℓ] - γ D(P, Q) }` over every distribution `P` supported on
/// `grid`, solved as one linear program over `P` jointly with a coupling of
/// `(P, Q)`; `losses[j]` is the loss at `grid[j]`.
pub fn penalty_sup_oracle(grid: &[Atom], losses: &[f64], q: &DiscreteDistribution, gamma: f64) -> Result<f64> {
    check_grid(grid, losses, q, gamma)?;
    let (n, g) = (q.len(), grid.len());
    // variables: π_ij over feasible arcs, then p_j
    let mut arcs = Vec::new();
    for (i, qa) in q.atoms.iter().enumerate() {
        for (j, ga) in grid.iter().enumerate() {
            if let TransportCost::Finite(c) = cost(&qa.z, qa.y, &ga.z, ga.y)? {
                arcs.push((i, j, c));
            }
        }
    }
    let nvars = arcs.len() + g;
    let mut a = vec![vec![0.0; nvars]; n + g];
    let mut c = vec![0.0; nvars];
    for (k, &(i, j, cij)) in arcs.iter().enumerate() {
        a[i][k] = 1.0;
        a[n + j][k] = 1.0;
        c[k] = -gamma * cij;
    }
    for j in 0..g {
        a[n + j][arcs.len() + j] = -1.0;
        c[arcs.len() + j] = losses[j];
    }
    let mut b = q.weights.clone();
    b.extend(std::iter::repeat_n(0.0, g));
    Ok(lp::maximize(&lp::LinearProgram { a, b, c })?.value)
}

/// `Σ_i q_i max_j { ℓ_j - γ c(grid_j, atom_i) }`: the expected per-atom
/// surrogate restricted to the grid.
pub fn per_atom_surrogate(grid: &[Atom], losses: &[f64], q: &DiscreteDistribution, gamma: f64) -> Result<f64> {
    check_grid(grid, losses, q, gamma)?;
    let mut total = 0.0;
    for (qa, &w) in q.atoms.iter().zip(&q.weights) {
        let mut best = f64::NEG_INFINITY;
        for (ga, &l) in grid.iter().zip(losses) {
            if let TransportCost::Finite(c) = cost(&qa.z, qa.y, &ga.z, ga.y)? {
                best = best.max(l - gamma * c);
            }
        }
        total += w * best;
    }
    Ok(total)
}

fn check_grid(grid: &[Atom], losses: &[f64], q: &DiscreteDistribution, gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!("penalty weight must be ≥ 0, got {gamma}")));
    }
    if grid.len() != losses.len() {
        return Err(Error::dim("grid losses", grid.len(), losses.len()));
    }
    if grid.len() > MAX_ATOMS || q.len() > MAX_ATOMS {
        return Err(Error::InvalidDistribution(format!(
            "support larger than {MAX_ATOMS} atoms"
        )));
    }
    for qa in &q.atoms {
        if !grid.iter().any(|g| g.y == qa.y) {
            return Err(Error::InvalidDistribution(format!(
                "no grid point carries label {}",
                qa.y
            )));
        }
    }
    Ok(())
}
