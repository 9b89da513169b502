//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use grand_core::{PackingSet, SimRng};
use rand::Rng;

pub fn two_slot() -> PackingSet {
    PackingSet::build_explicit(1, &[vec![2]]).unwrap()
}

/// Two types, scalar sizes 1 and 2, capacity 3.
pub fn sizes_one_two() -> PackingSet {
    PackingSet::build_vector_packing(&[vec![1.0], vec![2.0]], &[3.0]).unwrap()
}

pub fn pair() -> PackingSet {
    PackingSet::build_explicit(2, &[vec![1, 1]]).unwrap()
}

/// Instances with a nontrivial packing choice, each with its load vector.
pub fn named_instances() -> Vec<(&'static str, PackingSet, Vec<f64>)> {
    vec![
        ("two-slot", two_slot(), vec![1.0]),
        ("sizes-1-2-cap-3", sizes_one_two(), vec![0.5, 0.5]),
        ("pair", pair(), vec![0.4, 0.6]),
        (
            "2d-three-types",
            PackingSet::build_vector_packing(&[vec![0.5, 0.2], vec![0.3, 0.6], vec![0.2, 0.3]], &[1.0, 1.0]).unwrap(),
            vec![0.2, 0.3, 0.5],
        ),
    ]
}

/// Random vector-packing instance with `I ≤ 3` and `|K| ≤ 30`.
pub fn random_instance(rng: &mut SimRng) -> (PackingSet, Vec<f64>) {
    loop {
        let types = rng.gen_range(1..=3);
        let dims = rng.gen_range(1..=2);
        let capacity: Vec<f64> = (0..dims).map(|_| rng.gen_range(1.0..3.0)).collect();
        let sizes: Vec<Vec<f64>> = (0..types)
            .map(|_| capacity.iter().map(|c| rng.gen_range(0.15..1.0) * c.min(1.0)).collect())
            .collect();
        let Ok(ps) = PackingSet::build_vector_packing(&sizes, &capacity) else { continue };
        if ps.len() > 30 || ps.len() == types {
            continue;
        }
        let raw: Vec<f64> = (0..types).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        return (ps, raw.iter().map(|v| v / total).collect());
    }
}

/// Gaussian elimination with full pivoting, kept separate from the crate's solver.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut best = (col, col, 0.0f64);
        for r in col..n {
            for c in col..n {
                if a[r][c].abs() > best.2 {
                    best = (r, c, a[r][c].abs());
                }
            }
        }
        if best.2 < 1e-12 {
            return None;
        }
        a.swap(col, best.0);
        b.swap(col, best.0);
        for row in a.iter_mut() {
            row.swap(col, best.1);
        }
        perm.swap(col, best.1);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut y = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * y[c]).sum();
        y[r] = (b[r] - s) / a[r][r];
    }
    let mut x = vec![0.0; n];
    for (slot, &orig) in perm.iter().enumerate() {
        x[orig] = y[slot];
    }
    Some(x)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            go(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of `Σ_k x_k` over all basic feasible solutions of `Σ_k k_i x_k = ρ_i`.
pub fn vertex_enumeration(ps: &PackingSet, rho: &[f64]) -> (f64, Vec<f64>) {
    let ni = ps.num_types();
    let mut best = (f64::INFINITY, Vec::new());
    for cols in subsets(ps.len(), ni) {
        let a: Vec<Vec<f64>> = (0..ni)
            .map(|i| cols.iter().map(|&n| f64::from(ps.config(n).counts()[i])).collect())
            .collect();
        let Some(xb) = solve_square(a, rho.to_vec()) else { continue };
        if xb.iter().any(|v| *v < -1e-12) {
            continue;
        }
        let value: f64 = xb.iter().sum();
        if value < best.0 {
            let mut x = vec![0.0; ps.len()];
            for (&n, v) in cols.iter().zip(xb) {
                x[n] = v.max(0.0);
            }
            best = (value, x);
        }
    }
    best
}

/// Uniform-ish random point of `{x ≥ 0 : Σ_k k_i x_k = ρ_i}`: random mass on
/// every configuration, then each type is topped up through its unit configuration.
pub fn random_feasible(ps: &PackingSet, rho: &[f64], rng: &mut SimRng) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..ps.len()).map(|_| rng.gen_range(0.0..1.0) / ps.len() as f64).collect();
        for i in 0..ps.num_types() {
            x[ps.unit_index(i)] = 0.0;
        }
        let mut ok = true;
        for i in 0..ps.num_types() {
            let used: f64 = (0..ps.len()).map(|n| f64::from(ps.config(n).counts()[i]) * x[n]).sum();
            let rest = rho[i] - used;
            if rest < 0.0 {
                ok = false;
                break;
            }
            x[ps.unit_index(i)] = rest;
        }
        if ok {
            return x;
        }
    }
}
