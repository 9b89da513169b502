//! Output analysis helpers: sample moments and non-overlapping batch means.

use alloc::vec::Vec;

/// Number of batches used for steady-state confidence intervals.
pub const BATCHES: usize = 20;

/// Two-sided 95% Student-t critical value with `BATCHES − 1 = 19` degrees of freedom.
pub const T_CRIT_BATCHES: f64 = 2.093_024_054_408_263;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `NaN` with fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// 95% half-width from [`BATCHES`] batch means.
pub fn batch_half_width(batch_means: &[f64]) -> f64 {
    debug_assert_eq!(batch_means.len(), BATCHES);
    T_CRIT_BATCHES * libm::sqrt(variance(batch_means) / batch_means.len() as f64)
}

/// Area accumulator for a piecewise-constant path split into equal-length batches.
#[derive(Debug, Clone)]
pub(crate) struct BatchAreas {
    start: f64,
    batch_len: f64,
    /// `areas[b][j]` is the integral of channel `j` over batch `b`.
    areas: Vec<Vec<f64>>,
}

impl BatchAreas {
    pub(crate) fn new(start: f64, length: f64, channels: usize) -> Self {
        Self {
            start,
            batch_len: length / BATCHES as f64,
            areas: (0..BATCHES).map(|_| alloc::vec![0.0; channels]).collect(),
        }
    }

    /// Adds `values` held constant on `[from, to)`, splitting at batch boundaries.
    pub(crate) fn add(&mut self, from: f64, to: f64, values: &[f64]) {
        let mut t = from;
        while t < to {
            let b = (((t - self.start) / self.batch_len) as usize).min(BATCHES - 1);
            let edge = if b == BATCHES - 1 { to } else { self.start + (b + 1) as f64 * self.batch_len };
            let seg_end = if edge < to { edge } else { to };
            let dt = seg_end - t;
            if dt > 0.0 {
                for (a, v) in self.areas[b].iter_mut().zip(values) {
                    *a += v * dt;
                }
            }
            if seg_end <= t {
                // Boundary rounding: nudge into the next batch.
                break;
            }
            t = seg_end;
        }
    }

    /// Per-channel batch means, `out[j][b]`.
    pub(crate) fn batch_means(&self) -> Vec<Vec<f64>> {
        let channels = self.areas.first().map_or(0, Vec::len);
        (0..channels)
            .map(|j| self.areas.iter().map(|row| row[j] / self.batch_len).collect())
            .collect()
    }
}
