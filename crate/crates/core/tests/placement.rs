//! Distributional checks of the placement rule and the event draw.

mod common;

use std::sync::Arc;

use common::{sizes_one_two, two_slot};
use grand_core::engine::{departure_rate, step, total_rate, Event};
use grand_core::{EdgeId, PackingSet, Policy, RunSpec, SimRng, SystemState};

/// Upper 10^-3 quantiles of the chi-square distribution, df = 1..=6.
const CHI2_CRIT: [f64; 6] = [10.828, 13.816, 16.266, 18.467, 20.515, 22.458];

fn chi_square(observed: &[u64], expected_p: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(expected_p)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Placement probabilities by enumeration of the available servers.
fn placement_law(ps: &PackingSet, st: &SystemState, policy: &Policy, i: usize) -> Vec<(EdgeId, f64)> {
    let x0 = policy.zero_servers(st.z());
    let mut servers: Vec<EdgeId> = vec![ps.unit_edge(i); x0 as usize];
    for (n, k) in ps.configs().iter().enumerate() {
        let up = k.plus_unit(i);
        if let Some(m) = ps.index_of(&up) {
            let edge = ps.find_edge(m, i).unwrap();
            servers.extend(std::iter::repeat_n(edge, st.count(n) as usize));
        }
    }
    if servers.is_empty() {
        return vec![(ps.unit_edge(i), 1.0)];
    }
    let mut law: Vec<(EdgeId, f64)> = Vec::new();
    for e in &servers {
        match law.iter_mut().find(|(f, _)| f == e) {
            Some((_, w)) => *w += 1.0,
            None => law.push((*e, 1.0)),
        }
    }
    let n = servers.len() as f64;
    law.iter_mut().for_each(|(_, w)| *w /= n);
    law
}

fn tally(ps: &PackingSet, st: &SystemState, policy: &Policy, i: usize, draws: usize, seed: u64) -> Vec<u64> {
    let mut rng = SimRng::new(seed);
    let mut counts = vec![0u64; ps.edges().len()];
    for _ in 0..draws {
        counts[policy.place(ps, st, i, &mut rng).0] += 1;
    }
    counts
}

#[test]
fn two_slot_law_within_three_sigma() {
    let ps = two_slot();
    let st = SystemState::from_counts(&ps, vec![3, 5]).unwrap();
    let policy = Policy::grand_az(0.15).unwrap();
    assert_eq!(policy.zero_servers(st.z()), 2);
    let n = 100_000;
    let counts = tally(&ps, &st, &policy, 0, n, 11);
    let p = 2.0 / 5.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((counts[0] as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
    assert_eq!(counts[0] + counts[1], n as u64);
}

#[test]
fn chi_square_on_fixed_states() {
    let ps = sizes_one_two();
    let policies = [Policy::grand_az(0.2).unwrap(), Policy::grand_zp(0.5).unwrap()];
    let states = [vec![1, 2, 3, 0, 4], vec![0, 5, 1, 2, 0], vec![3, 0, 0, 1, 1]];
    let mut seed = 100;
    for policy in &policies {
        for counts in &states {
            let st = SystemState::from_counts(&ps, counts.clone()).unwrap();
            for i in 0..ps.num_types() {
                seed += 1;
                let law = placement_law(&ps, &st, policy, i);
                let tallied = tally(&ps, &st, policy, i, 50_000, seed);
                for (e, &c) in tallied.iter().enumerate() {
                    if c > 0 {
                        assert!(law.iter().any(|(f, _)| f.0 == e), "edge {e} drawn outside the support");
                    }
                }
                if law.len() < 2 {
                    continue;
                }
                let observed: Vec<u64> = law.iter().map(|(e, _)| tallied[e.0]).collect();
                let expected: Vec<f64> = law.iter().map(|(_, p)| *p).collect();
                let stat = chi_square(&observed, &expected);
                assert!(stat < CHI2_CRIT[law.len() - 2], "chi2 {stat} for {counts:?}, type {i}");
            }
        }
    }
}

#[test]
fn empty_state_and_no_fit_go_to_unit_edge() {
    let ps = sizes_one_two();
    let mut rng = SimRng::new(5);
    let empty = SystemState::empty(&ps);
    // Configuration (0,1) cannot take another type-1 customer; (1,1) and (3,0) are full.
    let full = SystemState::from_counts(&ps, vec![0, 0, 4, 0, 2]).unwrap();
    for policy in [Policy::grand_az(0.3).unwrap(), Policy::grand_zp(0.9).unwrap()] {
        for i in 0..2 {
            for _ in 0..200 {
                assert_eq!(policy.place(&ps, &empty, i, &mut rng), ps.unit_edge(i));
            }
        }
        for _ in 0..200 {
            assert_eq!(policy.place(&ps, &full, 1, &mut rng), ps.unit_edge(1));
        }
    }
}

#[test]
fn frozen_rate_event_frequencies() {
    let ps = Arc::new(sizes_one_two());
    let spec = RunSpec::new(ps.clone(), vec![0.3, 0.7], vec![1.0, 2.0], 20.0, Policy::grand_az(0.1).unwrap()).unwrap();
    let frozen = SystemState::from_counts(&ps, vec![2, 3, 1, 4, 1]).unwrap();
    let total = total_rate(&spec, &frozen);

    let mut rng = SimRng::new(9);
    let n = 100_000;
    let mut arrivals = vec![0u64; ps.num_types()];
    let mut departures = vec![0u64; ps.edges().len()];
    let mut dt_sum = 0.0;
    for _ in 0..n {
        let mut st = frozen.clone();
        let (dt, event) = step(&mut st, &spec, &mut rng).unwrap();
        dt_sum += dt;
        match event {
            Event::Arrival { ty, .. } => arrivals[ty] += 1,
            Event::Departure { edge } => departures[edge.0] += 1,
        }
        assert!(st.caches_consistent(&ps));
    }

    let check = |count: u64, rate: f64| {
        let p = rate / total;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - n as f64 * p).abs() <= 3.0 * sigma.max(1.0), "count {count}, p {p}");
    };
    for (i, &c) in arrivals.iter().enumerate() {
        check(c, spec.lambda()[i] * spec.r);
    }
    for (e, &c) in departures.iter().enumerate() {
        check(c, departure_rate(&ps, &frozen, spec.mu(), EdgeId(e)));
    }
    // Exp(R) holding times: mean 1/R, standard error 1/(R sqrt n).
    let mean_dt = dt_sum / n as f64;
    assert!((mean_dt - 1.0 / total).abs() <= 3.0 / (total * (n as f64).sqrt()));
}
