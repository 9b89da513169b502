//! Invariant suite run by `grand-sim check`.

use grand_core::engine::StartMode;
use grand_core::fluid::{distance_to_optimal_set, solve_relaxed_value, verify_optimal};
use grand_core::lyapunov::{
    lyapunov_grad, lyapunov_value, solve_cvx, xi_drift, xi_drift_flow_form, LyapunovParams,
};
use grand_core::{simulate, solve_lp, EdgeId, FluidPoint, Policy, SimRng, SystemState};
use rand::Rng;

use crate::config::Config;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &'static str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name, pass, detail }
}

const CHECK_A: f64 = 0.05;

fn random_positive(len: usize, rng: &mut SimRng) -> FluidPoint {
    FluidPoint::new((0..len).map(|_| rng.gen_range(1e-3..1.0)).collect()).expect("positive by construction")
}

/// Runs every property on the configured instance; `sim_r` sets the scale of the marginal check.
pub fn run_checks(config: &Config, seed: u64, sim_r: f64) -> Vec<CheckResult> {
    let ps = &*config.packing;
    let rho = config.rho();
    let mut rng = SimRng::new(seed);
    let mut out = Vec::new();

    out.push(result("packing is monotone", ps.is_monotone(), format!("|K| = {}, kappa = {}", ps.len(), ps.kappa())));

    let lp = match solve_lp(ps, &rho) {
        Ok(lp) => lp,
        Err(e) => {
            out.push(result("fluid LP solves", false, e.to_string()));
            return out;
        }
    };
    out.push(result(
        "LP optimum passes complementary slackness",
        verify_optimal(ps, &rho, &lp.x_star, &lp.eta),
        format!("L* = {:.16e}", lp.l_star),
    ));
    match solve_relaxed_value(ps, &rho) {
        Ok(v) => out.push(result("inequality LP has the same value", (v - lp.l_star).abs() <= 1e-9, format!("{v:.16e}"))),
        Err(e) => out.push(result("inequality LP has the same value", false, e.to_string())),
    }

    let params = LyapunovParams::new(ps, CHECK_A).expect("CHECK_A in (0, 1)");
    let mut worst_fd = 0.0f64;
    for _ in 0..10 {
        let x = random_positive(ps.len(), &mut rng);
        let g = lyapunov_grad(&params, &x).expect("positive point");
        for k in 0..ps.len() {
            let h = 1e-6 * x[k];
            let mut up = x.clone().into_vec();
            let mut down = up.clone();
            up[k] += h;
            down[k] -= h;
            let fu = lyapunov_value(&params, &FluidPoint::new(up).unwrap()).unwrap();
            let fd = lyapunov_value(&params, &FluidPoint::new(down).unwrap()).unwrap();
            let num = (fu - fd) / (2.0 * h);
            worst_fd = worst_fd.max((num - g[k]).abs() / g[k].abs().max(1e-3));
        }
    }
    out.push(result("gradient matches finite differences", worst_fd <= 1e-6, format!("max rel err {worst_fd:.3e}")));

    let mut violations = 0;
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let x = random_positive(ps.len(), &mut rng);
        let pair = xi_drift(&params, ps, &x, &config.mu).unwrap();
        let flow = xi_drift_flow_form(&params, ps, &x, &config.mu).unwrap();
        if pair > 0.0 {
            violations += 1;
        }
        worst_rel = worst_rel.max((pair - flow).abs() / pair.abs().max(1e-300));
    }
    out.push(result("drift is nonpositive", violations == 0, format!("{violations} violations in 1000 points")));
    out.push(result("pair and flow forms of the drift agree", worst_rel <= 1e-9, format!("max rel diff {worst_rel:.3e}")));

    match solve_cvx(ps, &rho, CHECK_A, 1e-11) {
        Ok(sol) => {
            let xi = xi_drift(&params, ps, &sol.point.x, &config.mu).unwrap_or(f64::NAN);
            let pf = sol.point.product_form_error(&params, ps);
            out.push(result(
                "CVX point has product form and zero drift",
                xi.abs() <= 1e-8 && pf <= 1e-9,
                format!("iterations {}, residual {:.3e}, drift {xi:.3e}, product-form err {pf:.3e}", sol.iterations, sol.residual),
            ));
        }
        Err(e) => out.push(result("CVX point has product form and zero drift", false, e.to_string())),
    }

    let mut prev = f64::INFINITY;
    let mut trend = true;
    let mut dists = Vec::new();
    for a in [1e-1, 1e-2, 1e-3, 1e-4] {
        let d = solve_cvx(ps, &rho, a, 1e-11)
            .map_err(|e| e.to_string())
            .and_then(|s| distance_to_optimal_set(ps, &rho, lp.l_star, &s.point.x, 1e-9).map_err(|e| e.to_string()));
        match d {
            Ok(d) => {
                trend &= d < prev;
                prev = d;
                dists.push(format!("{d:.3e}"));
            }
            Err(e) => {
                trend = false;
                dists.push(e);
            }
        }
    }
    out.push(result("CVX points approach X* as a shrinks", trend, dists.join(" > ")));

    let policy = config.policies[0];
    let mut st = SystemState::empty(ps);
    let mut consistent = true;
    for _ in 0..10_000 {
        let occupied: Vec<usize> = (0..ps.edges().len()).filter(|&e| st.count(ps.edges()[e].config) > 0).collect();
        if occupied.is_empty() || rng.gen_bool(0.5) {
            let i = rng.gen_range(0..ps.num_types());
            let edge = policy.place(ps, &st, i, &mut rng);
            consistent &= st.apply_arrival(ps, edge).is_ok();
        } else {
            let e = occupied[rng.gen_range(0..occupied.len())];
            consistent &= st.apply_departure(ps, EdgeId(e)).is_ok();
        }
        consistent &= st.caches_consistent(ps) && st.occupied() <= st.z();
    }
    out.push(result("state caches and server bound hold on a random walk", consistent, "10000 moves".into()));

    for &policy in &config.policies {
        let name = match policy {
            Policy::GrandZp { .. } => "type means match the offered load under grand-zp",
            Policy::GrandAz { .. } => "type means match the offered load under grand-az",
        };
        let outcome = config.run_spec(policy, sim_r).map_err(|e| e.to_string()).and_then(|mut spec| {
            spec.seed = seed;
            spec.start = StartMode::Stationary;
            simulate(&spec).map_err(|e| e.to_string()).map(|rec| (spec, rec))
        });
        match outcome {
            Ok((spec, rec)) => {
                let mut ok = true;
                let mut parts = Vec::new();
                for (i, r) in spec.rho().iter().enumerate() {
                    let target = r * spec.r;
                    ok &= (rec.mean_y[i] - target).abs() <= 4.0 * target.sqrt();
                    parts.push(format!("Y_{i} {:.2} vs {:.2}", rec.mean_y[i], target));
                }
                out.push(result(name, ok, parts.join(", ")));
            }
            Err(e) => out.push(result(name, false, e)),
        }
    }
    out
}
