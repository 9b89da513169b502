//! Fluid-scale optimality benchmark.
//!
//! The linear program
//!
//! ```text
//! minimize Σ_k x_k   subject to   Σ_k k_i x_k = ρ_i  (all i),   x ≥ 0
//! ```
//!
//! gives the least fluid-scaled number of occupied servers `L*` any placement policy
//! can achieve. Its optimal set `X*` is the target of the asymptotic optimality
//! statements, so this module also measures how far a simulated fluid state is from
//! `X*`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, norm};
use crate::packing::PackingSet;
use crate::simplex::{self, LpError};
use crate::state::FluidPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("load vector needs one positive entry per type")]
    BadLoad,
    #[error("point has {got} coordinates, packing set has {expected} configurations")]
    WrongLength { got: usize, expected: usize },
    #[error("solver failure: {0}")]
    Solver(#[from] LpError),
    #[error("primal {primal} and dual {dual} values disagree")]
    DualityGap { primal: f64, dual: f64 },
    #[error("Frank-Wolfe did not reach gap {target} within {iterations} iterations (last gap {gap})")]
    NotConverged { iterations: usize, gap: f64, target: f64 },
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// An optimal primal vertex with an optimal nonnegative dual.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub l_star: f64,
    pub x_star: FluidPoint,
    /// Optimal solution of the dual of the `≥` relaxation: `Σ_i k_i η_i ≤ 1`, `η ≥ 0`.
    pub eta: Vec<f64>,
}

fn check_load(ps: &PackingSet, rho: &[f64]) -> Result<(), FluidError> {
    if rho.len() != ps.num_types() || rho.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(FluidError::BadLoad);
    }
    Ok(())
}

fn type_rows(ps: &PackingSet) -> Vec<Vec<f64>> {
    (0..ps.num_types())
        .map(|i| (0..ps.len()).map(|n| ps.count(n, i)).collect())
        .collect()
}

/// Solves the fluid LP and its dual.
///
/// The primal vertex comes from the equality form; `η` comes from a separate solve of
/// `max ρ·η s.t. Σ_i k_i η_i ≤ 1, η ≥ 0`, which is the dual of the `≥` relaxation and
/// has the same optimal value.
pub fn solve_lp(ps: &PackingSet, rho: &[f64]) -> Result<LpSolution, FluidError> {
    check_load(ps, rho)?;
    let k = ps.len();
    let primal = simplex::minimize(&type_rows(ps), rho, &vec![1.0; k])?;

    // Dual: variables (η_1..η_I, s_1..s_K) with rows Σ_i k_i η_i + s_k = 1.
    let ni = ps.num_types();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|n| {
            let mut row = vec![0.0; ni + k];
            for i in 0..ni {
                row[i] = ps.count(n, i);
            }
            row[ni + n] = 1.0;
            row
        })
        .collect();
    let mut cost = vec![0.0; ni + k];
    for (c, r) in cost.iter_mut().zip(rho) {
        *c = -r;
    }
    let dual = simplex::minimize(&rows, &vec![1.0; k], &cost)?;
    let eta = dual.x[..ni].to_vec();

    let dual_value = dot(rho, &eta);
    if (primal.objective - dual_value).abs() > 1e-10 * (1.0 + primal.objective.abs()) {
        return Err(FluidError::DualityGap { primal: primal.objective, dual: dual_value });
    }
    Ok(LpSolution {
        l_star: primal.objective,
        x_star: FluidPoint::from_vec_unchecked(primal.x),
        eta,
    })
}

/// Optimal value of the `≥` relaxation `Σ_k k_i x_k ≥ ρ_i`.
pub fn solve_relaxed_value(ps: &PackingSet, rho: &[f64]) -> Result<f64, FluidError> {
    check_load(ps, rho)?;
    let k = ps.len();
    let ni = ps.num_types();
    let rows: Vec<Vec<f64>> = type_rows(ps)
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend((0..ni).map(|j| if i == j { -1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut cost = vec![1.0; k];
    cost.extend(core::iter::repeat_n(0.0, ni));
    Ok(simplex::minimize(&rows, rho, &cost)?.objective)
}

/// Certifies `x ∈ X*` through complementary slackness with `η`.
///
/// True iff `x` satisfies the conservation laws, `η` is dual feasible, and every
/// configuration with `Σ_i k_i η_i < 1` carries no mass (all to `1e-9`).
pub fn verify_optimal(ps: &PackingSet, rho: &[f64], x: &FluidPoint, eta: &[f64]) -> bool {
    const TOL: f64 = 1e-9;
    if x.len() != ps.len() || eta.len() != ps.num_types() || rho.len() != ps.num_types() {
        return false;
    }
    let feasible = x.type_mass(ps).iter().zip(rho).all(|(m, r)| (m - r).abs() <= TOL);
    let dual_ok = eta.iter().all(|&e| e >= -TOL);
    let slack_ok = (0..ps.len()).all(|n| {
        let load: f64 = (0..ps.num_types()).map(|i| ps.count(n, i) * eta[i]).sum();
        load <= 1.0 + TOL && (load >= 1.0 - TOL || x[n] <= TOL)
    });
    feasible && dual_ok && slack_ok
}

/// Signed objective excess `Σ_k x_k − L*`.
pub fn objective_gap(x: &FluidPoint, l_star: f64) -> f64 {
    x.total() - l_star
}

const FW_MAX_ITERS: usize = 200_000;

/// Euclidean distance from `x` to `X*`, accurate to within `tol`.
///
/// Minimizes `½‖x − y‖²` over `y ∈ X*` with away-step Frank–Wolfe. The linear
/// minimization oracle is an LP over `{y ≥ 0 : Σ_k k_i y_k = ρ_i, Σ_k y_k = L*}`;
/// iteration stops once the Frank–Wolfe gap is at most `tol²/2`, which bounds the
/// squared-distance excess and hence the distance error by `tol`. Tolerances
/// finer than round-off in the gap are clamped to it.
pub fn distance_to_optimal_set(ps: &PackingSet, rho: &[f64], l_star: f64, x: &FluidPoint, tol: f64) -> Result<f64, FluidError> {
    check_load(ps, rho)?;
    if x.len() != ps.len() {
        return Err(FluidError::WrongLength { got: x.len(), expected: ps.len() });
    }
    if !(tol > 0.0) {
        return Err(FluidError::BadTolerance);
    }
    let k = ps.len();
    let mut rows = type_rows(ps);
    rows.push(vec![1.0; k]);
    let mut rhs = rho.to_vec();
    rhs.push(l_star);
    let lmo = |g: &[f64]| -> Result<Vec<f64>, FluidError> { Ok(simplex::minimize(&rows, &rhs, g)?.x) };

    let xs = x.as_slice();
    let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
    let first = lmo(&neg)?;
    let mut y = first.clone();
    let mut active: Vec<(Vec<f64>, f64)> = vec![(first, 1.0)];
    let target = 0.5 * tol * tol;
    let mut gap = f64::INFINITY;

    for _ in 0..FW_MAX_ITERS {
        let g: Vec<f64> = y.iter().zip(xs).map(|(a, b)| a - b).collect();
        let s = lmo(&g)?;
        let gy = dot(&g, &y);
        let gs = dot(&g, &s);
        gap = gy - gs;
        // The gap is a difference of two dot products and cannot resolve below their round-off.
        let noise = 16.0 * (k as f64) * f64::EPSILON * (gy.abs() + gs.abs());
        if gap <= target.max(noise) {
            let d: Vec<f64> = y.iter().zip(xs).map(|(a, b)| a - b).collect();
            return Ok(norm(&d));
        }

        let (away_idx, away_val) = active
            .iter()
            .enumerate()
            .map(|(n, (v, _))| (n, dot(&g, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("active set is never empty");
        let away_gap = away_val - gy;

        let (dir, gamma_max, toward) = if gap >= away_gap {
            let d: Vec<f64> = s.iter().zip(&y).map(|(a, b)| a - b).collect();
            (d, 1.0, true)
        } else {
            let w = active[away_idx].1;
            let d: Vec<f64> = y.iter().zip(&active[away_idx].0).map(|(a, b)| a - b).collect();
            (d, w / (1.0 - w), false)
        };
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let gamma = (-dot(&g, &dir) / dd).clamp(0.0, gamma_max);
        for (yv, dv) in y.iter_mut().zip(&dir) {
            *yv += gamma * dv;
        }

        if toward {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match active.iter_mut().find(|(v, _)| same_vertex(v, &s)) {
                Some((_, w)) => *w += gamma,
                None => active.push((s, gamma)),
            }
            if gamma >= 1.0 {
                active.retain(|(v, _)| same_vertex(v, &y));
                if let Some((_, w)) = active.first_mut() {
                    *w = 1.0;
                }
            }
        } else {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 + gamma;
            }
            active[away_idx].1 -= gamma;
            if gamma >= gamma_max {
                active.remove(away_idx);
            }
        }
        active.retain(|(_, w)| *w > 1e-15);
        if active.is_empty() {
            active.push((y.clone(), 1.0));
        }
    }
    Err(FluidError::NotConverged { iterations: FW_MAX_ITERS, gap, target })
}

fn same_vertex(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-12)
}
