//! Exact CTMC state `X = {X_k}` and the particle moves along edges.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::packing::{EdgeId, PackingSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("arrival along edge {0:?} needs an occupied source server, found none")]
    EmptySource(EdgeId),
    #[error("departure along edge {0:?} from a configuration with zero servers")]
    EmptyConfig(EdgeId),
    #[error("state has {got} configuration counts, packing set has {expected}")]
    WrongLength { got: usize, expected: usize },
}

/// Server counts per nonzero configuration, with cached per-type and total
/// customer counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemState {
    counts: Vec<u64>,
    y: Vec<u64>,
    z: u64,
}

impl SystemState {
    /// The empty system.
    pub fn empty(ps: &PackingSet) -> Self {
        Self { counts: vec![0; ps.len()], y: vec![0; ps.num_types()], z: 0 }
    }

    pub fn from_counts(ps: &PackingSet, counts: Vec<u64>) -> Result<Self, StateError> {
        if counts.len() != ps.len() {
            return Err(StateError::WrongLength { got: counts.len(), expected: ps.len() });
        }
        let (y, z) = tally(ps, &counts);
        Ok(Self { counts, y, z })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, config: usize) -> u64 {
        self.counts[config]
    }

    /// `Y_i`, customers of type `i`.
    pub fn y(&self) -> &[u64] {
        &self.y
    }

    /// `Z`, total customers.
    pub fn z(&self) -> u64 {
        self.z
    }

    /// Number of occupied servers `Σ_k X_k`.
    pub fn occupied(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `X_(i)`: zero-servers plus occupied servers that fit one more type-`i` customer.
    pub fn avail(&self, ps: &PackingSet, i: usize, zero_servers: u64) -> u64 {
        zero_servers + ps.acceptors(i).iter().map(|&(k, _)| self.counts[k]).sum::<u64>()
    }

    /// Moves one server up the edge `(k, i)`, or creates an `e_i` server.
    pub fn apply_arrival(&mut self, ps: &PackingSet, edge: EdgeId) -> Result<(), StateError> {
        let e = ps.edge(edge);
        if let Some(src) = e.source {
            if self.counts[src] == 0 {
                return Err(StateError::EmptySource(edge));
            }
            self.counts[src] -= 1;
        }
        self.counts[e.config] += 1;
        self.y[e.ty] += 1;
        self.z += 1;
        Ok(())
    }

    /// Moves one server down the edge `(k, i)`, or annihilates an `e_i` server.
    pub fn apply_departure(&mut self, ps: &PackingSet, edge: EdgeId) -> Result<(), StateError> {
        let e = ps.edge(edge);
        if self.counts[e.config] == 0 {
            return Err(StateError::EmptyConfig(edge));
        }
        self.counts[e.config] -= 1;
        if let Some(src) = e.source {
            self.counts[src] += 1;
        }
        self.y[e.ty] -= 1;
        self.z -= 1;
        Ok(())
    }

    /// `x = X / r`.
    pub fn fluid_scale(&self, r: f64) -> FluidPoint {
        FluidPoint(self.counts.iter().map(|&c| c as f64 / r).collect())
    }

    /// True when the cached `Y` and `Z` equal a fresh recount.
    pub fn caches_consistent(&self, ps: &PackingSet) -> bool {
        let (y, z) = tally(ps, &self.counts);
        y == self.y && z == self.z
    }
}

fn tally(ps: &PackingSet, counts: &[u64]) -> (Vec<u64>, u64) {
    let mut y = vec![0u64; ps.num_types()];
    for (n, &c) in counts.iter().enumerate() {
        for (yi, &ki) in y.iter_mut().zip(ps.config(n).counts()) {
            *yi += u64::from(ki) * c;
        }
    }
    let z = y.iter().sum();
    (y, z)
}

/// Nonnegative real vector over `K` in canonical configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPoint(Vec<f64>);

impl FluidPoint {
    /// Returns `None` if any coordinate is negative or not finite.
    pub fn new(x: Vec<f64>) -> Option<Self> {
        x.iter().all(|v| v.is_finite() && *v >= 0.0).then_some(Self(x))
    }

    /// Wraps without validation; for solver iterates that are nonnegative by construction.
    pub(crate) fn from_vec_unchecked(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_k x_k`.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Σ_k k_i x_k` for each type.
    pub fn type_mass(&self, ps: &PackingSet) -> Vec<f64> {
        let mut y = vec![0.0; ps.num_types()];
        for (n, &v) in self.0.iter().enumerate() {
            for (yi, &ki) in y.iter_mut().zip(ps.config(n).counts()) {
                *yi += f64::from(ki) * v;
            }
        }
        y
    }
}

impl core::ops::Index<usize> for FluidPoint {
    type Output = f64;
    fn index(&self, n: usize) -> &f64 {
        &self.0[n]
    }
}
