//! Dense two-phase simplex for small standard-form programs
//! `max cᵀx  s.t.  Ax = b, x ≥ 0`, with Bland's rule against cycling.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Constraint rows, each of length `c.len()`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side
    t: Vec<Vec<f64>>,
    /// reduced-cost row, same width; last entry is minus the objective
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// columns allowed to enter
    active: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.t[0].len() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.t[row].len();
        let piv = self.t[row][col];
        for k in 0..w {
            self.t[row][k] /= piv;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, p) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes; returns Err on unboundedness.
    fn run(&mut self) -> Result<()> {
        let rhs = self.rhs();
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..self.active).find(|&j| self.obj[j] > EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (r, line) in self.t.iter().enumerate() {
                if line[col] > EPS {
                    let ratio = line[rhs] / line[col];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS
                                || ((ratio - bratio).abs() <= EPS && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::Lp("unbounded".into()));
            };
            self.pivot(row, col);
        }
        Err(Error::Lp("pivot limit reached".into()))
    }
}

pub fn maximize(lp: &LinearProgram) -> Result<LpSolution> {
    let m = lp.a.len();
    let n = lp.c.len();
    if lp.b.len() != m || lp.a.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("inconsistent dimensions".into()));
    }
    if m == 0 {
        if lp.c.iter().any(|&c| c > 0.0) {
            return Err(Error::Lp("unbounded".into()));
        }
        return Ok(LpSolution {
            value: 0.0,
            x: vec![0.0; n],
        });
    }

    // Phase 1: artificial columns n..n+m, maximize -Σ artificials.
    let width = n + m + 1;
    let mut t = Vec::with_capacity(m);
    for (i, (row, &b)) in lp.a.iter().zip(&lp.b).enumerate() {
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        let mut line = vec![0.0; width];
        for j in 0..n {
            line[j] = sign * row[j];
        }
        line[n + i] = 1.0;
        line[width - 1] = sign * b;
        t.push(line);
    }
    let mut obj = vec![0.0; width];
    for line in &t {
        for j in 0..n {
            obj[j] += line[j];
        }
        obj[width - 1] += line[width - 1];
    }
    let mut tab = Tableau {
        t,
        obj,
        basis: (n..n + m).collect(),
        active: n,
    };
    tab.run()?;
    let infeas = tab.obj[width - 1];
    let scale = lp.b.iter().map(|b| b.abs()).fold(1.0, f64::max);
    if infeas > 1e-9 * scale {
        return Err(Error::Lp(format!("infeasible (phase-one residual {infeas:e})")));
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, col);
            } else {
                tab.t.remove(r);
                tab.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }

    // Phase 2.
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(&lp.c);
    for (r, &bcol) in tab.basis.iter().enumerate() {
        let cb = lp.c[bcol];
        if cb != 0.0 {
            for (v, t) in obj.iter_mut().zip(&tab.t[r]) {
                *v -= cb * t;
            }
        }
    }
    tab.obj = obj;
    tab.run()?;

    let mut x = vec![0.0; n];
    for (r, &bcol) in tab.basis.iter().enumerate() {
        x[bcol] = tab.t[r][width - 1];
    }
    let value = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpSolution { value, x })
}
