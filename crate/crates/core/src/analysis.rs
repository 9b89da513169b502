//! Post-processing helpers for simulated runs.

use alloc::vec::Vec;

use thiserror::Error;

use crate::engine::{s_exponent, RunRecord};
use crate::packing::{Configuration, PackingSet};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TailError {
    #[error("deviation {w} must lie in [0, {nu}]")]
    OutOfRange { nu: f64, w: f64 },
}

/// One-sided Poisson concentration bound `exp(−w²/(4ν))`, valid for `0 ≤ w ≤ ν`.
///
/// Bounds both `P(V ≥ ν + w)` and `P(V ≤ ν − w)` for `V ~ Poisson(ν)`.
pub fn poisson_tail_bound(nu: f64, w: f64) -> Result<f64, TailError> {
    if !(w >= 0.0 && w <= nu) {
        return Err(TailError::OutOfRange { nu, w });
    }
    if w == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::exp(-w * w / (4.0 * nu)))
}

/// Empirical two-sided tail frequency `#{|v − ν| ≥ w} / n`.
pub fn tail_frequency(samples: &[f64], nu: f64, w: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&v| (v - nu).abs() >= w).count() as f64 / samples.len() as f64
}

/// Observed occupancy floor of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorRow {
    /// The zero configuration stands for the zero-server pool.
    pub config: Configuration,
    /// Smallest count over all measurement windows.
    pub min_count: u64,
    pub exponent: f64,
    /// `r^{s(k)}`.
    pub scale: f64,
    /// `min_count / r^{s(k)}`.
    pub ratio: f64,
}

/// Compares the smallest observed `X_k` (and zero-server count) with `r^{s(k)}`.
///
/// Minima are taken over the measurement windows only, so warm-up transients from
/// an empty start never enter the table.
pub fn occupancy_floor_report(ps: &PackingSet, records: &[RunRecord], p: f64, r: f64) -> Vec<FloorRow> {
    let mut rows = Vec::with_capacity(ps.len() + 1);
    let zero = Configuration::zero(ps.num_types());
    let min_zero = records.iter().map(|rec| rec.min_zero_servers).min().unwrap_or(0);
    rows.push(row(zero, min_zero, p, r));
    for (n, k) in ps.configs().iter().enumerate() {
        let m = records.iter().map(|rec| rec.min_counts[n]).min().unwrap_or(0);
        rows.push(row(k.clone(), m, p, r));
    }
    rows
}

fn row(config: Configuration, min_count: u64, p: f64, r: f64) -> FloorRow {
    let exponent = s_exponent(&config, p);
    let scale = libm::pow(r, exponent);
    FloorRow { config, min_count, exponent, scale, ratio: min_count as f64 / scale }
}
