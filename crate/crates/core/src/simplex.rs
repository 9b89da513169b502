//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min c·x  s.t.  A x = b, x ≥ 0` for small dense problems. Bland's
//! lowest-index rule makes the pivot sequence, and therefore the returned vertex,
//! a deterministic function of the input. The final basic solution is re-solved
//! from the original columns to strip accumulated tableau round-off.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("final basis is numerically singular")]
    Singular,
    #[error("constraint matrix and vectors have inconsistent shapes")]
    Shape,
}

/// An optimal basic feasible solution.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic structural columns, one per non-redundant row.
    pub basis: Vec<usize>,
}

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

struct Tableau {
    rows: Vec<Vec<f64>>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    row[col] = 0.0;
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Runs Bland pivots over columns `< allowed` until optimal.
    fn optimize(&mut self, allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..allowed).find(|&j| self.cost[j] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                if !self.active[r] {
                    continue;
                }
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            let tie = (ratio - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                            if ratio < bv && !tie || tie && self.basis[r] < self.basis[br] {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, col);
        }
        Err(LpError::IterationLimit)
    }
}

/// Minimizes `c·x` subject to `A x = b`, `x ≥ 0`.
pub fn minimize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<BasicSolution, LpError> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(LpError::Shape);
    }
    let ncols = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut t = vec![0.0; ncols + 1];
        for (j, v) in row.iter().enumerate() {
            t[j] = sign * v;
        }
        t[n + i] = 1.0;
        t[ncols] = sign * b[i];
        rows.push(t);
    }

    // Phase I: minimize the sum of artificials.
    let mut cost = vec![0.0; ncols + 1];
    for row in &rows {
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[ncols] -= row[ncols];
    }
    let mut tab = Tableau { rows, cost, basis: (n..n + m).collect(), active: vec![true; m], ncols };
    tab.optimize(n)?;
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if -tab.cost[ncols] > FEAS_TOL * scale {
        return Err(LpError::Infeasible);
    }

    // Drive zero-level artificials out of the basis; rows where that fails are redundant.
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        match (0..n).find(|&j| tab.rows[r][j].abs() > 1e-9) {
            Some(j) => tab.pivot(r, j),
            None => tab.active[r] = false,
        }
    }

    // Phase II.
    let mut cost = vec![0.0; ncols + 1];
    cost[..n].copy_from_slice(c);
    for r in 0..m {
        if !tab.active[r] {
            continue;
        }
        let cb = c[tab.basis[r]];
        if cb != 0.0 {
            for (v, t) in cost.iter_mut().zip(&tab.rows[r]) {
                *v -= cb * t;
            }
        }
    }
    tab.cost = cost;
    tab.optimize(n)?;

    // Re-solve B x_B = b on the original data.
    let live: Vec<usize> = (0..m).filter(|&r| tab.active[r]).collect();
    let basis: Vec<usize> = live.iter().map(|&r| tab.basis[r]).collect();
    let bmat = live.iter().map(|&r| basis.iter().map(|&j| a[r][j]).collect()).collect();
    let rhs = live.iter().map(|&r| b[r]).collect();
    let xb = linalg::solve(bmat, rhs).ok_or(LpError::Singular)?;
    let mut x = vec![0.0; n];
    for (&j, v) in basis.iter().zip(xb) {
        if v < -FEAS_TOL * scale {
            return Err(LpError::Singular);
        }
        x[j] = v.max(0.0);
    }
    let objective = linalg::dot(c, &x);
    Ok(BasicSolution { x, objective, basis })
}
