//! Exact CTMC simulation of the infinite-server system under a GRAND policy.
//!
//! Arrivals of type `i` form a Poisson process of rate `λ_i r`; every customer of
//! type `i` in a configuration-`k` server leaves at rate `μ_i`, so the departure
//! rate along edge `(k, i)` is `k_i μ_i X_k`. Events are drawn Gillespie-style:
//! an exponential holding time at the total rate, then one categorical draw over
//! the arrival and edge-departure buckets.
//!
//! The measurement phase integrates the piecewise-constant path exactly, so every
//! reported mean is a time average, never an event average.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::packing::{Configuration, EdgeId, PackingSet};
use crate::policy::Policy;
use crate::rng::SimRng;
use crate::state::{FluidPoint, StateError, SystemState};
use crate::stats::{batch_half_width, BatchAreas};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid run specification: {0}")]
    InvalidSpec(&'static str),
    #[error(transparent)]
    State(#[from] StateError),
}

/// How the system is populated at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartMode {
    /// `Y_i(0) ~ Poisson(ρ_i r)` customers, placed one by one through the policy
    /// in a uniformly shuffled type order.
    #[default]
    Stationary,
    Empty,
}

/// Constants for the three stationary-regime conditions monitored during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticParams {
    pub epsilon: f64,
    pub s: f64,
    /// Floor constant for `x_k ≥ c r^{s−1}`. `None` derives it from the warm-up
    /// phase as half the smallest observed `x_k / r^{s−1}`.
    pub c: Option<f64>,
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        Self { epsilon: 0.25, s: 0.9, c: None }
    }
}

/// Everything needed to reproduce one simulation run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub packing: Arc<PackingSet>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    pub r: f64,
    pub policy: Policy,
    pub warmup_time: f64,
    pub measure_time: f64,
    pub seed: u64,
    pub stream: u64,
    pub start: StartMode,
    pub diagnostics: DiagnosticParams,
    /// Number of equally spaced `Y` snapshots recorded in the measurement window.
    pub snapshots: usize,
}

impl RunSpec {
    /// Validates the rates and rescales `λ` so that `Σ_i λ_i/μ_i = 1`.
    ///
    /// Warm-up and measurement windows default to `10/min μ` and `50/min μ`.
    pub fn new(packing: Arc<PackingSet>, lambda: Vec<f64>, mu: Vec<f64>, r: f64, policy: Policy) -> Result<Self, EngineError> {
        let n = packing.num_types();
        if lambda.len() != n || mu.len() != n {
            return Err(EngineError::InvalidSpec("rate vectors must have one entry per type"));
        }
        if lambda.iter().chain(&mu).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EngineError::InvalidSpec("arrival and service rates must be positive and finite"));
        }
        if !(r.is_finite() && r >= 1.0) {
            return Err(EngineError::InvalidSpec("scale r must be at least 1"));
        }
        let load: f64 = lambda.iter().zip(&mu).map(|(l, m)| l / m).sum();
        let lambda = lambda.iter().map(|l| l / load).collect();
        let min_mu = mu.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            packing,
            lambda,
            mu,
            r,
            policy,
            warmup_time: 10.0 / min_mu,
            measure_time: 50.0 / min_mu,
            seed: 0,
            stream: 0,
            start: StartMode::Stationary,
            diagnostics: DiagnosticParams::default(),
            snapshots: 200,
        })
    }

    /// Normalized arrival rates per unit scale.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Offered load per type, `ρ_i = λ_i/μ_i`, summing to one.
    pub fn rho(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l / m).collect()
    }
}

/// One transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A type-`ty` arrival, placed along `edge`.
    Arrival { ty: usize, edge: EdgeId },
    Departure { edge: EdgeId },
}

/// Departure rate along an edge, `k_i μ_i X_k`.
pub fn departure_rate(ps: &PackingSet, st: &SystemState, mu: &[f64], edge: EdgeId) -> f64 {
    let e = ps.edge(edge);
    ps.count(e.config, e.ty) * mu[e.ty] * st.count(e.config) as f64
}

/// Total event rate `Σ_i λ_i r + Σ_{(k,i)∈M} k_i μ_i X_k`.
pub fn total_rate(spec: &RunSpec, st: &SystemState) -> f64 {
    let ps = &*spec.packing;
    let arrivals: f64 = spec.lambda.iter().map(|l| l * spec.r).sum();
    let departures: f64 = (0..ps.edges().len()).map(|e| departure_rate(ps, st, &spec.mu, EdgeId(e))).sum();
    arrivals + departures
}

/// Draws the holding time and the next event without changing the state.
fn draw_event(spec: &RunSpec, st: &SystemState, rng: &mut SimRng) -> (f64, Event) {
    let ps = &*spec.packing;
    let total = total_rate(spec, st);
    let e1: f64 = Exp1.sample(rng);
    let dt = e1 / total;

    let mut u = rng.gen::<f64>() * total;
    let mut chosen = None;
    for (i, l) in spec.lambda.iter().enumerate() {
        let rate = l * spec.r;
        if u < rate {
            chosen = Some(Err(i));
            break;
        }
        u -= rate;
    }
    if chosen.is_none() {
        let mut last_positive = None;
        for e in 0..ps.edges().len() {
            let rate = departure_rate(ps, st, &spec.mu, EdgeId(e));
            if rate > 0.0 {
                last_positive = Some(e);
                if u < rate {
                    chosen = Some(Ok(EdgeId(e)));
                    break;
                }
                u -= rate;
            }
        }
        // Rounding can leave u just past the last bucket.
        if chosen.is_none() {
            chosen = Some(match last_positive {
                Some(e) => Ok(EdgeId(e)),
                None => Err(spec.lambda.len() - 1),
            });
        }
    }
    let event = match chosen.expect("some bucket is always chosen") {
        Err(ty) => Event::Arrival { ty, edge: spec.policy.place(ps, st, ty, rng) },
        Ok(edge) => Event::Departure { edge },
    };
    (dt, event)
}

fn apply_event(ps: &PackingSet, st: &mut SystemState, event: Event) -> Result<(), StateError> {
    match event {
        Event::Arrival { edge, .. } => st.apply_arrival(ps, edge),
        Event::Departure { edge } => st.apply_departure(ps, edge),
    }
}

/// Advances the chain by one transition and returns the holding time and the event applied.
pub fn step(st: &mut SystemState, spec: &RunSpec, rng: &mut SimRng) -> Result<(f64, Event), EngineError> {
    let (dt, event) = draw_event(spec, st, rng);
    apply_event(&spec.packing, st, event)?;
    Ok((dt, event))
}

/// Outcome of the three monitored conditions at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conditions {
    /// `|Z/r − 1| ≤ r^{−1/2+ε}`.
    pub total_near_scale: bool,
    /// `|Σ_k k_i x_k − ρ_i| ≤ r^{−1/2+ε}/I` for every type.
    pub types_near_load: bool,
    /// `x_k ≥ c r^{s−1}` for every nonzero configuration.
    pub occupancy_floor: bool,
}

/// Evaluates the three conditions on the fluid-scaled state.
pub fn check_conditions(ps: &PackingSet, st: &SystemState, rho: &[f64], r: f64, epsilon: f64, c: f64, s: f64) -> Conditions {
    let band = libm::pow(r, -0.5 + epsilon);
    let total_near_scale = (st.z() as f64 / r - 1.0).abs() <= band;
    let per_type = band / ps.num_types() as f64;
    let types_near_load = st.y().iter().zip(rho).all(|(&y, &p)| (y as f64 / r - p).abs() <= per_type);
    let floor = c * libm::pow(r, s - 1.0);
    let occupancy_floor = st.counts().iter().all(|&x| x as f64 / r >= floor);
    Conditions { total_near_scale, types_near_load, occupancy_floor }
}

/// `s(k) = 1 − (1 + Σ_i k_i)(1 − p)`, the occupancy floor exponent of configuration `k`.
pub fn s_exponent(k: &Configuration, p: f64) -> f64 {
    1.0 - (1.0 + k.total() as f64) * (1.0 - p)
}

/// Fractions of measurement time during which each condition held.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConditionFractions {
    pub total_near_scale: f64,
    pub types_near_load: f64,
    pub occupancy_floor: f64,
}

/// 95% batch-means half-widths, same layout as the means they belong to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HalfWidths {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: f64,
    /// For the fluid occupied-server total `Σ_k x_k`.
    pub occupied: f64,
}

/// Steady-state summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Time average of `X(t)/r`.
    pub mean_x: FluidPoint,
    /// Time average of `Y_i(t)` (unscaled).
    pub mean_y: Vec<f64>,
    /// Time average of `Z(t)` (unscaled).
    pub mean_z: f64,
    /// Time average of the zero-server count (unscaled).
    pub mean_zero_servers: f64,
    /// Events simulated inside the measurement window.
    pub samples: u64,
    pub diagnostics: ConditionFractions,
    /// Floor constant actually used for the occupancy condition.
    pub floor_c: f64,
    pub half_widths: HalfWidths,
    /// Per-batch time averages of `Σ_k x_k`.
    pub occupied_batches: Vec<f64>,
    /// Minimum of each `X_k` over the measurement window.
    pub min_counts: Vec<u64>,
    /// Minimum zero-server count over the measurement window.
    pub min_zero_servers: u64,
    /// `Y` at equally spaced instants of the measurement window.
    pub y_snapshots: Vec<Vec<u64>>,
    /// Per-batch time averages of `X(t)/r`.
    pub x_batches: Vec<FluidPoint>,
    /// State at the end of the measurement window.
    pub final_state: SystemState,
    /// Model time at which the run stopped.
    pub end_time: f64,
    pub seed: u64,
    pub stream: u64,
}

impl RunRecord {
    /// Time-averaged fluid occupied servers `Σ_k x_k`.
    pub fn mean_occupied(&self) -> f64 {
        self.mean_x.total()
    }
}

/// Populates the system according to `spec.start`.
pub fn initial_state(spec: &RunSpec, rng: &mut SimRng) -> Result<SystemState, EngineError> {
    let ps = &*spec.packing;
    let mut st = SystemState::empty(ps);
    if spec.start == StartMode::Empty {
        return Ok(st);
    }
    let mut arrivals = Vec::new();
    for (i, rho) in spec.rho().iter().enumerate() {
        let mean = rho * spec.r;
        let n = Poisson::new(mean).map_err(|_| EngineError::InvalidSpec("bad Poisson mean"))?.sample(rng);
        arrivals.extend(core::iter::repeat_n(i, n as usize));
    }
    arrivals.shuffle(rng);
    for i in arrivals {
        let edge = spec.policy.place(ps, &st, i, rng);
        st.apply_arrival(ps, edge)?;
    }
    Ok(st)
}

struct Window {
    start: f64,
    end: f64,
    r: f64,
    rho: Vec<f64>,
    diag: DiagnosticParams,
    floor_c: f64,
    areas: BatchAreas,
    channel_buf: Vec<f64>,
    held: [f64; 3],
    min_counts: Vec<u64>,
    min_zero: u64,
    snapshot_every: f64,
    next_snapshot: f64,
    snapshots_left: usize,
    y_snapshots: Vec<Vec<u64>>,
    samples: u64,
}

impl Window {
    /// Integrates the state held constant on `[from, to)` (clipped to the window).
    fn hold(&mut self, ps: &PackingSet, policy: &Policy, st: &SystemState, from: f64, to: f64) {
        let from = from.max(self.start);
        let to = to.min(self.end);
        if to <= from {
            return;
        }
        let zero = policy.zero_servers(st.z());
        self.channel_buf.clear();
        self.channel_buf.extend(st.counts().iter().map(|&c| c as f64));
        self.channel_buf.extend(st.y().iter().map(|&y| y as f64));
        self.channel_buf.push(st.z() as f64);
        self.channel_buf.push(zero as f64);
        self.channel_buf.push(st.occupied() as f64);
        self.areas.add(from, to, &self.channel_buf);

        let c = check_conditions(ps, st, &self.rho, self.r, self.diag.epsilon, self.floor_c, self.diag.s);
        let dt = to - from;
        for (h, ok) in self.held.iter_mut().zip([c.total_near_scale, c.types_near_load, c.occupancy_floor]) {
            if ok {
                *h += dt;
            }
        }
        for (m, &x) in self.min_counts.iter_mut().zip(st.counts()) {
            *m = (*m).min(x);
        }
        self.min_zero = self.min_zero.min(zero);
        while self.snapshots_left > 0 && self.next_snapshot < to {
            if self.next_snapshot >= from {
                self.y_snapshots.push(st.y().to_vec());
            }
            self.next_snapshot += self.snapshot_every;
            self.snapshots_left -= 1;
        }
    }
}

/// Runs warm-up then measurement and returns the time-averaged summary.
///
/// The result is a pure function of `spec`, including its seed and stream.
pub fn simulate(spec: &RunSpec) -> Result<RunRecord, EngineError> {
    if !(spec.warmup_time > 0.0 && spec.measure_time > 0.0) {
        return Err(EngineError::InvalidSpec("warm-up and measurement times must be positive"));
    }
    let ps = &*spec.packing;
    let mut rng = SimRng::with_stream(spec.seed, spec.stream);
    let mut st = initial_state(spec, &mut rng)?;
    let r = spec.r;
    let s = spec.diagnostics.s;

    // Warm-up; the second half also observes the occupancy floor when c is derived.
    let pilot_from = spec.warmup_time / 2.0;
    let mut pilot_min = vec![u64::MAX; ps.len()];
    let mut t = 0.0;
    loop {
        let (dt, event) = draw_event(spec, &st, &mut rng);
        if t + dt > pilot_from {
            for (m, &x) in pilot_min.iter_mut().zip(st.counts()) {
                *m = (*m).min(x);
            }
        }
        if t + dt >= spec.warmup_time {
            // Memorylessness: the pending event is redrawn from the window start.
            break;
        }
        apply_event(ps, &mut st, event)?;
        t += dt;
    }
    let floor_c = spec.diagnostics.c.unwrap_or_else(|| {
        let floor = pilot_min.iter().copied().min().unwrap_or(0);
        if floor == 0 {
            // Smallest floor that still rules out extinction: X_k ≥ 1/2.
            0.5 / libm::pow(r, s)
        } else {
            0.5 * (floor as f64 / r) / libm::pow(r, s - 1.0)
        }
    });

    let start = spec.warmup_time;
    let end = spec.warmup_time + spec.measure_time;
    let channels = ps.len() + ps.num_types() + 3;
    let snapshot_every = spec.measure_time / spec.snapshots.max(1) as f64;
    let mut w = Window {
        start,
        end,
        r,
        rho: spec.rho(),
        diag: spec.diagnostics,
        floor_c,
        areas: BatchAreas::new(start, spec.measure_time, channels),
        channel_buf: Vec::with_capacity(channels),
        held: [0.0; 3],
        min_counts: vec![u64::MAX; ps.len()],
        min_zero: u64::MAX,
        snapshot_every,
        next_snapshot: start,
        snapshots_left: spec.snapshots,
        y_snapshots: Vec::with_capacity(spec.snapshots),
        samples: 0,
    };

    let mut t = start;
    loop {
        let (dt, event) = draw_event(spec, &st, &mut rng);
        let next = t + dt;
        w.hold(ps, &spec.policy, &st, t, next);
        if next >= end {
            t = end;
            break;
        }
        apply_event(ps, &mut st, event)?;
        w.samples += 1;
        t = next;
    }

    let means = w.areas.batch_means();
    let k = ps.len();
    let ni = ps.num_types();
    let avg = |j: usize| crate::stats::mean(&means[j]);
    let hw = |j: usize| batch_half_width(&means[j]);
    let mean_x = FluidPoint::from_vec_unchecked((0..k).map(|j| avg(j) / r).collect());
    let half_widths = HalfWidths {
        x: (0..k).map(|j| hw(j) / r).collect(),
        y: (k..k + ni).map(hw).collect(),
        z: hw(k + ni),
        occupied: hw(k + ni + 2) / r,
    };
    let occupied_batches = means[k + ni + 2].iter().map(|v| v / r).collect();
    let x_batches = (0..means[0].len())
        .map(|b| FluidPoint::from_vec_unchecked((0..k).map(|j| means[j][b] / r).collect()))
        .collect();
    let frac = |h: f64| (h / spec.measure_time).clamp(0.0, 1.0);

    Ok(RunRecord {
        mean_x,
        mean_y: (k..k + ni).map(avg).collect(),
        mean_z: avg(k + ni),
        mean_zero_servers: avg(k + ni + 1),
        samples: w.samples,
        diagnostics: ConditionFractions {
            total_near_scale: frac(w.held[0]),
            types_near_load: frac(w.held[1]),
            occupancy_floor: frac(w.held[2]),
        },
        floor_c,
        half_widths,
        occupied_batches,
        min_counts: w.min_counts,
        min_zero_servers: w.min_zero,
        y_snapshots: w.y_snapshots,
        x_batches,
        final_state: st,
        end_time: t,
        seed: spec.seed,
        stream: spec.stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_slot_spec(r: f64, policy: Policy) -> RunSpec {
        let ps = Arc::new(PackingSet::build_explicit(1, &[vec![2]]).unwrap());
        RunSpec::new(ps, vec![1.0], vec![1.0], r, policy).unwrap()
    }

    #[test]
    fn rates_follow_edge_formula() {
        let spec = two_slot_spec(100.0, Policy::grand_az(0.1).unwrap());
        let st = SystemState::from_counts(&spec.packing, vec![0, 5]).unwrap();
        assert_eq!(departure_rate(&spec.packing, &st, spec.mu(), EdgeId(1)), 10.0);
        assert_eq!(total_rate(&spec, &st), 110.0);
        let empty = SystemState::empty(&spec.packing);
        assert_eq!(total_rate(&spec, &empty), 100.0);
    }

    #[test]
    fn empty_state_always_arrives() {
        let spec = two_slot_spec(100.0, Policy::grand_az(0.1).unwrap());
        let mut rng = SimRng::new(3);
        for _ in 0..200 {
            let mut st = SystemState::empty(&spec.packing);
            let (dt, ev) = step(&mut st, &spec, &mut rng).unwrap();
            assert!(dt > 0.0);
            assert_eq!(ev, Event::Arrival { ty: 0, edge: EdgeId(0) });
        }
    }

    #[test]
    fn lambda_is_normalized() {
        let ps = Arc::new(PackingSet::build_explicit(2, &[vec![1, 1]]).unwrap());
        let spec = RunSpec::new(ps, vec![2.0, 6.0], vec![1.0, 2.0], 10.0, Policy::grand_az(0.1).unwrap()).unwrap();
        let total: f64 = spec.rho().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((spec.rho()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        let ps = Arc::new(PackingSet::build_explicit(1, &[vec![2]]).unwrap());
        let pol = Policy::grand_az(0.1).unwrap();
        assert!(RunSpec::new(ps.clone(), vec![0.0], vec![1.0], 10.0, pol).is_err());
        assert!(RunSpec::new(ps.clone(), vec![1.0, 1.0], vec![1.0], 10.0, pol).is_err());
        assert!(RunSpec::new(ps, vec![1.0], vec![1.0], 0.5, pol).is_err());
    }

    #[test]
    fn condition_edge_cases() {
        let spec = two_slot_spec(10_000.0, Policy::grand_az(0.1).unwrap());
        let ps = &*spec.packing;
        // Y = ρ r exactly: 2000 in (1) and 4000 in (2) gives Y = 10000.
        let st = SystemState::from_counts(ps, vec![2000, 4000]).unwrap();
        let c = check_conditions(ps, &st, &[1.0], 10_000.0, 0.25, 0.1, 0.9);
        assert!(c.types_near_load && c.total_near_scale && c.occupancy_floor);

        let empty = SystemState::empty(ps);
        let c = check_conditions(ps, &empty, &[1.0], 10_000.0, 0.25, 0.1, 0.9);
        assert!(!c.occupancy_floor);

        // Z = r(1 + 2 r^{-1/4}) = 10000 * 1.2.
        let st = SystemState::from_counts(ps, vec![12_000, 0]).unwrap();
        let c = check_conditions(ps, &st, &[1.0], 10_000.0, 0.25, 0.1, 0.9);
        assert!(!c.total_near_scale);
    }

    #[test]
    fn s_exponent_values() {
        assert!((s_exponent(&Configuration::zero(2), 0.93) - 0.93).abs() < 1e-15);
        assert!((s_exponent(&Configuration::new(vec![1, 1]), 0.96) - 0.88).abs() < 1e-12);
        assert!((s_exponent(&Configuration::new(vec![5]), 1.0 - 1e-12) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn window_bookkeeping() {
        let mut spec = two_slot_spec(50.0, Policy::grand_zp(0.9).unwrap());
        spec.warmup_time = 2.0;
        spec.measure_time = 4.0;
        spec.snapshots = 10;
        let rec = simulate(&spec).unwrap();
        assert_eq!(rec.end_time, 6.0);
        assert_eq!(rec.y_snapshots.len(), 10);
        assert_eq!(rec.occupied_batches.len(), crate::stats::BATCHES);
        for f in [rec.diagnostics.total_near_scale, rec.diagnostics.types_near_load, rec.diagnostics.occupancy_floor] {
            assert!((0.0..=1.0).contains(&f));
        }
        assert!((rec.mean_occupied() - crate::stats::mean(&rec.occupied_batches)).abs() < 1e-12);
    }
}
