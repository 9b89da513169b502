//! Entropy-like Lyapunov function `L^(a)`, its drift, and the product-form minimizer.
//!
//! ```text
//! L^(a)(x) = −(1/ln a) Σ_k x_k ln(x_k c_k / (e a)),     c_k = Π_i k_i!
//! ```
//!
//! Throughout, `b = −ln a` and the zero configuration is augmented with `x_0 = a`,
//! so that `∂L/∂x_0 = 0` and every edge `(k, i)` has a well-defined source
//! coordinate. The augmentation lives only here; simulation states never carry it.
//!
//! The drift `Ξ(x)` is computed two independent ways: as the sum of pairwise edge
//! terms (nonpositive term by term) and as the directional derivative of `L^(a)`
//! along the idealized edge flows. The minimizer of `L^(a)` over the conservation
//! polytope has product form `x_k = (a/c_k) exp(b Σ_i k_i ν_i)` and is found by
//! damped Newton on the dual in `ν`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{self, dot};
use crate::packing::{EdgeId, PackingSet};
use crate::state::FluidPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("parameter a must lie in (0, 1), got {0}")]
    BadA(f64),
    #[error("coordinate {0} is not strictly positive")]
    NonPositive(usize),
    #[error("edges {0:?} and {1:?} belong to different customer types")]
    TypeMismatch(EdgeId, EdgeId),
    #[error("point has {got} coordinates, packing set has {expected} configurations")]
    WrongLength { got: usize, expected: usize },
    #[error("load vector needs one positive entry per type")]
    BadLoad,
    #[error("Newton did not converge in {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("Newton system is singular")]
    Singular,
    #[error("multiplier {ty} disagrees with its unit-configuration identity")]
    MultiplierMismatch { ty: usize },
}

/// `a`, `b = −ln a` and the factorial products `c_k` for one packing set.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovParams {
    a: f64,
    b: f64,
    c: Vec<f64>,
    log_c: Vec<f64>,
}

impl LyapunovParams {
    pub fn new(ps: &PackingSet, a: f64) -> Result<Self, LyapunovError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(LyapunovError::BadA(a));
        }
        Ok(Self {
            a,
            b: -libm::log(a),
            c: ps.configs().iter().map(|k| k.factorial_product()).collect(),
            log_c: ps.configs().iter().map(|k| k.log_factorial_product()).collect(),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

fn check_len(params: &LyapunovParams, x: &FluidPoint) -> Result<(), LyapunovError> {
    if x.len() != params.c.len() {
        return Err(LyapunovError::WrongLength { got: x.len(), expected: params.c.len() });
    }
    Ok(())
}

fn check_positive(x: &FluidPoint) -> Result<(), LyapunovError> {
    match x.as_slice().iter().position(|v| !(*v > 0.0)) {
        Some(n) => Err(LyapunovError::NonPositive(n)),
        None => Ok(()),
    }
}

/// `L^(a)(x)` with `0 ln 0 = 0`.
pub fn lyapunov_value(params: &LyapunovParams, x: &FluidPoint) -> Result<f64, LyapunovError> {
    check_len(params, x)?;
    let log_a = libm::log(params.a);
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(&params.log_c)
        .filter(|(v, _)| **v > 0.0)
        .map(|(&v, lc)| v * (libm::log(v) + lc - 1.0 - log_a))
        .sum();
    Ok(sum / params.b)
}

/// `∂L/∂x_k = (1/b) ln(c_k x_k / a)` for every `k ∈ K`.
pub fn lyapunov_grad(params: &LyapunovParams, x: &FluidPoint) -> Result<Vec<f64>, LyapunovError> {
    check_len(params, x)?;
    check_positive(x)?;
    Ok(x.as_slice()
        .iter()
        .zip(&params.log_c)
        .map(|(&v, lc)| (lc + libm::log(v) - libm::log(params.a)) / params.b)
        .collect())
}

/// `ln x` for a configuration slot, with the zero configuration fixed at `a`.
fn log_coord(params: &LyapunovParams, x: &FluidPoint, slot: Option<usize>) -> f64 {
    match slot {
        Some(n) => libm::log(x[n]),
        None => libm::log(params.a),
    }
}

fn coord(params: &LyapunovParams, x: &FluidPoint, slot: Option<usize>) -> f64 {
    match slot {
        Some(n) => x[n],
        None => params.a,
    }
}

/// `x_(i) = a + Σ_{k : k+e_i ∈ K} x_k`.
fn available_mass(ps: &PackingSet, params: &LyapunovParams, x: &FluidPoint, i: usize) -> f64 {
    params.a + ps.acceptors(i).iter().map(|&(k, _)| x[k]).sum::<f64>()
}

/// `χ_{k,k',i}(x) = ln(k'_i x_{k−e_i} x_{k'}) − ln(k_i x_k x_{k'−e_i})` for two edges of type `i`.
pub fn chi(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint, first: EdgeId, second: EdgeId) -> Result<f64, LyapunovError> {
    check_len(params, x)?;
    check_positive(x)?;
    chi_unchecked(params, ps, x, first, second)
}

fn chi_unchecked(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint, first: EdgeId, second: EdgeId) -> Result<f64, LyapunovError> {
    let e = ps.edge(first);
    let f = ps.edge(second);
    if e.ty != f.ty {
        return Err(LyapunovError::TypeMismatch(first, second));
    }
    let i = e.ty;
    let ki = ps.count(e.config, i);
    let kpi = ps.count(f.config, i);
    let lhs = libm::log(kpi) + log_coord(params, x, e.source) + libm::log(x[f.config]);
    let rhs = libm::log(ki) + libm::log(x[e.config]) + log_coord(params, x, f.source);
    Ok(lhs - rhs)
}

/// `Ξ(x)` as the sum over unordered pairs of distinct same-type edges of
/// `ξ_{k,k',i} + ξ_{k',k,i}`, each term nonpositive.
pub fn xi_drift(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint, mu: &[f64]) -> Result<f64, LyapunovError> {
    check_len(params, x)?;
    check_positive(x)?;
    let mut total = 0.0;
    for i in 0..ps.num_types() {
        let avail = available_mass(ps, params, x, i);
        let edges = ps.edges_of_type(i);
        for (n, &e1) in edges.iter().enumerate() {
            for &e2 in &edges[n + 1..] {
                total += pair_term(params, ps, x, mu, avail, e1, e2);
            }
        }
    }
    Ok(total)
}

/// `ξ_{k,k',i} + ξ_{k',k,i} = (μ_i / (b x_(i))) · χ · (k_i x_k x_{k'−e_i} − k'_i x_{k−e_i} x_{k'})`.
fn pair_term(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint, mu: &[f64], avail: f64, e1: EdgeId, e2: EdgeId) -> f64 {
    let e = ps.edge(e1);
    let f = ps.edge(e2);
    let i = e.ty;
    let fwd = ps.count(e.config, i) * x[e.config] * coord(params, x, f.source);
    let back = ps.count(f.config, i) * coord(params, x, e.source) * x[f.config];
    let chi = libm::log(back) - libm::log(fwd);
    mu[i] / (params.b * avail) * chi * (fwd - back)
}

/// `Ξ(x)` as the derivative of `L^(a)` along the idealized edge flows: along each
/// edge `(k, i)` mass moves up at `ṽ = λ̃_i x_{k−e_i} / x_(i)` and down at
/// `w̃ = k_i μ_i x_k`, with `λ̃_i = Σ_k k_i μ_i x_k`.
pub fn xi_drift_flow_form(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint, mu: &[f64]) -> Result<f64, LyapunovError> {
    check_len(params, x)?;
    check_positive(x)?;
    let lambda_tilde: Vec<f64> = x.type_mass(ps).iter().zip(mu).map(|(m, u)| m * u).collect();
    let avail: Vec<f64> = (0..ps.num_types()).map(|i| available_mass(ps, params, x, i)).collect();
    let mut total = Neumaier::default();
    for e in ps.edges() {
        let i = e.ty;
        let ki = ps.count(e.config, i);
        let source = coord(params, x, e.source);
        let up = lambda_tilde[i] * source / avail[i];
        let down = ki * mu[i] * x[e.config];
        // ∂L/∂x_k − ∂L/∂x_{k−e_i}, using c_k / c_{k−e_i} = k_i.
        let d = libm::log(ki * x[e.config] / source) / params.b;
        total.add(d * (up - down));
    }
    Ok(total.sum())
}

/// Compensated summation.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Largest `|χ|` over all pairs of distinct same-type edges.
pub fn max_abs_chi(params: &LyapunovParams, ps: &PackingSet, x: &FluidPoint) -> Result<f64, LyapunovError> {
    check_len(params, x)?;
    check_positive(x)?;
    let mut worst: f64 = 0.0;
    for i in 0..ps.num_types() {
        let edges = ps.edges_of_type(i);
        for (n, &e1) in edges.iter().enumerate() {
            for &e2 in &edges[n + 1..] {
                worst = worst.max(chi_unchecked(params, ps, x, e1, e2)?.abs());
            }
        }
    }
    Ok(worst)
}

/// Smallest coordinate value used when a simulated point has to be pushed into
/// the open orthant for reporting.
pub const REPORTING_FLOOR: f64 = 1e-300;

/// Raises zero coordinates to [`REPORTING_FLOOR`]; the flag reports whether any
/// coordinate was changed. Floored points are for display only, never for certification.
pub fn floor_for_reporting(x: &FluidPoint) -> (FluidPoint, bool) {
    let mut floored = false;
    let v = x
        .as_slice()
        .iter()
        .map(|&c| {
            if c < REPORTING_FLOOR {
                floored = true;
                REPORTING_FLOOR
            } else {
                c
            }
        })
        .collect();
    (FluidPoint::from_vec_unchecked(v), floored)
}

/// A point of the form `x_k = (a/c_k) exp(b Σ_i k_i ν_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFormPoint {
    pub x: FluidPoint,
    pub nu: Vec<f64>,
    pub a: f64,
}

impl ProductFormPoint {
    /// Builds the product-form point for multipliers `nu`, evaluating in the log domain.
    pub fn from_multipliers(params: &LyapunovParams, ps: &PackingSet, nu: Vec<f64>) -> Self {
        let x = log_product_form(params, ps, &nu).into_iter().map(libm::exp).collect();
        Self { x: FluidPoint::from_vec_unchecked(x), nu, a: params.a }
    }

    /// Largest relative deviation from the product-form identity.
    pub fn product_form_error(&self, params: &LyapunovParams, ps: &PackingSet) -> f64 {
        log_product_form(params, ps, &self.nu)
            .into_iter()
            .zip(self.x.as_slice())
            .map(|(lx, &v)| (v / libm::exp(lx) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn log_product_form(params: &LyapunovParams, ps: &PackingSet, nu: &[f64]) -> Vec<f64> {
    let log_a = libm::log(params.a);
    ps.configs()
        .iter()
        .zip(&params.log_c)
        .map(|(k, lc)| {
            let kn: f64 = k.counts().iter().zip(nu).map(|(&ki, v)| f64::from(ki) * v).sum();
            log_a - lc + params.b * kn
        })
        .collect()
}

/// Result of [`solve_cvx`].
#[derive(Debug, Clone, PartialEq)]
pub struct CvxSolution {
    pub point: ProductFormPoint,
    pub iterations: usize,
    /// `‖Σ_k k x_k − ρ‖∞` at the returned point.
    pub residual: f64,
}

const NEWTON_BUDGET: usize = 200;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

/// Minimizes `L^(a)` over `{x ≥ 0 : Σ_k k_i x_k = ρ_i}`.
///
/// Newton's method with backtracking halving runs on the convex dual potential
/// `φ(ν) = (1/b) Σ_k x_k(ν) − ρ·ν`, whose gradient is the conservation residual
/// `Σ_k k x_k(ν) − ρ` and whose Hessian `b Σ_k k kᵀ x_k(ν)` is positive definite.
/// Starts from `ν = 0` and stops when the residual is at most `tol` in the max norm.
pub fn solve_cvx(ps: &PackingSet, rho: &[f64], a: f64, tol: f64) -> Result<CvxSolution, LyapunovError> {
    let params = LyapunovParams::new(ps, a)?;
    if rho.len() != ps.num_types() || rho.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(LyapunovError::BadLoad);
    }
    let ni = ps.num_types();
    let counts: Vec<Vec<f64>> = (0..ps.len()).map(|n| (0..ni).map(|i| ps.count(n, i)).collect()).collect();

    let potential = |nu: &[f64]| -> f64 {
        let mass: f64 = log_product_form(&params, ps, nu).into_iter().map(libm::exp).sum();
        mass / params.b - dot(rho, nu)
    };
    let residual_of = |x: &[f64]| -> Vec<f64> {
        let mut g: Vec<f64> = rho.iter().map(|r| -r).collect();
        for (kv, &xv) in counts.iter().zip(x) {
            for (gi, ki) in g.iter_mut().zip(kv) {
                *gi += ki * xv;
            }
        }
        g
    };

    let mut nu = vec![0.0; ni];
    let mut phi = potential(&nu);
    for iteration in 0..=NEWTON_BUDGET {
        let x: Vec<f64> = log_product_form(&params, ps, &nu).into_iter().map(libm::exp).collect();
        let g = residual_of(&x);
        let res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res <= tol {
            let point = ProductFormPoint { x: FluidPoint::from_vec_unchecked(x), nu, a };
            for i in 0..ni {
                let unit = point.x[ps.unit_index(i)];
                let implied = 1.0 - libm::log(unit) / libm::log(a);
                if (implied - point.nu[i]).abs() > 1e-9 * (1.0 + point.nu[i].abs()) {
                    return Err(LyapunovError::MultiplierMismatch { ty: i });
                }
            }
            return Ok(CvxSolution { point, iterations: iteration, residual: res });
        }
        if iteration == NEWTON_BUDGET {
            return Err(LyapunovError::NotConverged { iterations: iteration, residual: res });
        }

        let mut hess = vec![vec![0.0; ni]; ni];
        for (kv, &xv) in counts.iter().zip(&x) {
            for p in 0..ni {
                for q in 0..ni {
                    hess[p][q] += params.b * kv[p] * kv[q] * xv;
                }
            }
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = linalg::solve(hess, neg_g).ok_or(LyapunovError::Singular)?;
        let slope = dot(&g, &step);
        // Once the predicted decrease is below round-off in φ, fall back to
        // requiring a smaller residual.
        let flat = -slope <= 1e-13 * (1.0 + phi.abs());

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = nu.iter().zip(&step).map(|(v, s)| v + t * s).collect();
            let p = potential(&trial);
            let ok = if flat {
                let xt: Vec<f64> = log_product_form(&params, ps, &trial).into_iter().map(libm::exp).collect();
                let rt = residual_of(&xt).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                rt < res
            } else {
                p <= phi + ARMIJO * t * slope
            };
            if p.is_finite() && ok {
                nu = trial;
                phi = p;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(LyapunovError::NotConverged { iterations: iteration, residual: res });
        }
    }
    unreachable!("loop returns on the final iteration")
}

/// Near-optimality certificate: the conservation residual is within
/// `r^{−1/2+ε}/I` for every type and every pair of same-type edges has `|χ| ≤ δ1`.
///
/// Points with a zero coordinate are not certified, since `χ` is undefined there.
pub fn near_opt_certificate(
    params: &LyapunovParams,
    ps: &PackingSet,
    x: &FluidPoint,
    rho: &[f64],
    delta1: f64,
    eps: f64,
    r: f64,
) -> bool {
    if x.len() != ps.len() || rho.len() != ps.num_types() || check_positive(x).is_err() {
        return false;
    }
    let band = libm::pow(r, -0.5 + eps) / ps.num_types() as f64;
    let feasible = x.type_mass(ps).iter().zip(rho).all(|(m, p)| (m - p).abs() <= band);
    feasible && max_abs_chi(params, ps, x).is_ok_and(|c| c <= delta1)
}
