mod common;

use common::*;
use grand_core::fluid::{distance_to_optimal_set, objective_gap, solve_lp, solve_relaxed_value, verify_optimal};
use grand_core::{FluidPoint, SimRng};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn lp_matches_vertex_enumeration_on_random_instances() {
    let mut rng = SimRng::new(2024);
    for _ in 0..25 {
        let (ps, rho) = random_instance(&mut rng);
        let sol = solve_lp(&ps, &rho).unwrap();
        let (oracle, _) = vertex_enumeration(&ps, &rho);
        assert!((sol.l_star - oracle).abs() <= 1e-10, "L* {} vs oracle {}", sol.l_star, oracle);
        assert!(verify_optimal(&ps, &rho, &sol.x_star, &sol.eta));
        let dual: f64 = rho.iter().zip(&sol.eta).map(|(r, e)| r * e).sum();
        assert!((dual - sol.l_star).abs() <= 1e-10);
        let resid = sol.x_star.type_mass(&ps).iter().zip(&rho).map(|(m, r)| (m - r).abs()).fold(0.0, f64::max);
        assert!(resid <= 1e-10);
    }
}

#[test]
fn sizes_one_two_matches_oracle() {
    let ps = sizes_one_two();
    let sol = solve_lp(&ps, &[0.5, 0.5]).unwrap();
    let (oracle, x) = vertex_enumeration(&ps, &[0.5, 0.5]);
    assert!((sol.l_star - oracle).abs() <= 1e-10);
    for (a, b) in sol.x_star.as_slice().iter().zip(&x) {
        assert!((a - b).abs() <= 1e-10);
    }
    assert!((oracle - 0.5).abs() < 1e-12);
}

#[test]
fn relaxation_has_same_value() {
    let mut rng = SimRng::new(77);
    for (_, ps, rho) in named_instances() {
        let a = solve_lp(&ps, &rho).unwrap().l_star;
        assert!((a - solve_relaxed_value(&ps, &rho).unwrap()).abs() < 1e-10);
    }
    for _ in 0..15 {
        let (ps, rho) = random_instance(&mut rng);
        let a = solve_lp(&ps, &rho).unwrap().l_star;
        assert!((a - solve_relaxed_value(&ps, &rho).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn feasible_points_never_beat_lp() {
    let mut rng = SimRng::new(5);
    for (_, ps, rho) in named_instances() {
        let l_star = solve_lp(&ps, &rho).unwrap().l_star;
        for _ in 0..100 {
            let y = FluidPoint::new(random_feasible(&ps, &rho, &mut rng)).unwrap();
            assert!(objective_gap(&y, l_star) >= -1e-12);
        }
    }
}

#[test]
fn distance_is_at_least_cauchy_schwarz_bound() {
    let mut rng = SimRng::new(11);
    for (_, ps, rho) in named_instances() {
        let sol = solve_lp(&ps, &rho).unwrap();
        for _ in 0..20 {
            let x = FluidPoint::new((0..ps.len()).map(|_| rng.gen_range(0.0..0.6)).collect()).unwrap();
            let d = distance_to_optimal_set(&ps, &rho, sol.l_star, &x, 1e-7).unwrap();
            let bound = objective_gap(&x, sol.l_star).abs() / (ps.len() as f64).sqrt();
            assert!(d + 1e-7 >= bound, "d = {d}, bound = {bound}");
        }
    }
}

#[test]
fn distance_zero_on_optimal_set() {
    for (_, ps, rho) in named_instances() {
        let sol = solve_lp(&ps, &rho).unwrap();
        let d = distance_to_optimal_set(&ps, &rho, sol.l_star, &sol.x_star, 1e-8).unwrap();
        assert!(d <= 1e-8);
    }
}

/// Several configurations share the optimum here, so `X*` is a segment and the
/// projection can land in its relative interior.
#[test]
fn distance_to_a_segment() {
    // Types of size 1 and 2 in capacity 4: (4,0), (2,1), (0,2) are all tight.
    let ps = grand_core::PackingSet::build_vector_packing(&[vec![1.0], vec![2.0]], &[4.0]).unwrap();
    let rho = [0.5, 0.5];
    let sol = solve_lp(&ps, &rho).unwrap();
    let mut rng = SimRng::new(8);
    for _ in 0..10 {
        let x = FluidPoint::new((0..ps.len()).map(|_| rng.gen_range(0.0..0.4)).collect()).unwrap();
        let d = distance_to_optimal_set(&ps, &rho, sol.l_star, &x, 1e-7).unwrap();
        // Brute force over a fine parametrization of the optimal face.
        let brute = optimal_face_distance(&ps, &rho, sol.l_star, x.as_slice());
        assert!((d - brute).abs() <= 2e-6, "fw {d} vs brute {brute}");
    }
}

/// Distance to `X*` by dense sampling of convex combinations of optimal vertices.
fn optimal_face_distance(ps: &grand_core::PackingSet, rho: &[f64], l_star: f64, x: &[f64]) -> f64 {
    let verts: Vec<Vec<f64>> = all_optimal_vertices(ps, rho, l_star);
    let mut best = f64::INFINITY;
    let steps = 400;
    // Pairs of vertices and their segments; the face here is at most a triangle.
    for (p, a) in verts.iter().enumerate() {
        for b in &verts[p..] {
            for c in &verts[p..] {
                for s in 0..=steps {
                    for t in 0..=(steps - s) {
                        let (u, v) = (s as f64 / steps as f64, t as f64 / steps as f64);
                        let w = 1.0 - u - v;
                        let d: f64 = (0..x.len())
                            .map(|n| {
                                let y = u * a[n] + v * b[n] + w * c[n];
                                (x[n] - y) * (x[n] - y)
                            })
                            .sum();
                        best = best.min(d);
                    }
                }
                if verts.len() <= 2 {
                    break;
                }
            }
        }
    }
    // Refine: the grid error is quadratic in the step, so report the grid optimum.
    best.sqrt()
}

fn all_optimal_vertices(ps: &grand_core::PackingSet, rho: &[f64], l_star: f64) -> Vec<Vec<f64>> {
    let ni = ps.num_types();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let n = ps.len();
    let mut idx: Vec<usize> = (0..ni).collect();
    loop {
        let a: Vec<Vec<f64>> = (0..ni).map(|i| idx.iter().map(|&c| f64::from(ps.config(c).counts()[i])).collect()).collect();
        if let Some(xb) = solve_square(a, rho.to_vec()) {
            if xb.iter().all(|v| *v >= -1e-12) && (xb.iter().sum::<f64>() - l_star).abs() < 1e-10 {
                let mut x = vec![0.0; n];
                for (&c, v) in idx.iter().zip(xb) {
                    x[c] = v.max(0.0);
                }
                if !out.iter().any(|o| o.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-12)) {
                    out.push(x);
                }
            }
        }
        // Next combination.
        let mut pos = ni;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < n - ni + pos {
                idx[pos] += 1;
                for q in pos + 1..ni {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Moving `x` in a straight line toward a point of `X*` never increases the distance.
    #[test]
    fn distance_monotone_toward_optimal_set(
        raw in proptest::collection::vec(0.0f64..0.8, 5),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let ps = sizes_one_two();
        let rho = [0.5, 0.5];
        let sol = solve_lp(&ps, &rho).unwrap();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let at = |t: f64| FluidPoint::new(raw.iter().zip(sol.x_star.as_slice()).map(|(x, y)| x + t * (y - x)).collect()).unwrap();
        let d_lo = distance_to_optimal_set(&ps, &rho, sol.l_star, &at(lo), 1e-8).unwrap();
        let d_hi = distance_to_optimal_set(&ps, &rho, sol.l_star, &at(hi), 1e-8).unwrap();
        prop_assert!(d_hi <= d_lo + 2e-8);
    }
}
