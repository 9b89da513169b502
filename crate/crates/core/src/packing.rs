//! Monotone packing constraint sets and the edge structure that drives the dynamics.
//!
//! A [`PackingSet`] is the feasible family `K̄` of server configurations. It is closed
//! under componentwise decrease, always contains every single-customer configuration
//! `e_i`, and carries the edge list `M = {(k, i) : k ∈ K, k − e_i ∈ K̄}`.
//!
//! Nonzero configurations are stored in lexicographic order; every vector over `K`
//! in this crate (state counts, fluid points, LP solutions) uses that index layout.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Content of one server: `counts[i]` customers of type `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration(Vec<u32>);

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn zero(num_types: usize) -> Self {
        Self(vec![0; num_types])
    }

    /// The single-customer configuration `e_i`.
    pub fn unit(num_types: usize, i: usize) -> Self {
        let mut counts = vec![0; num_types];
        counts[i] = 1;
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn num_types(&self) -> usize {
        self.0.len()
    }

    /// `Σ_i k_i`, the number of customers held.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `k ≤ other` componentwise.
    pub fn le(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn plus_unit(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.0[i] += 1;
        c
    }

    /// `k − e_i`, or `None` if `k_i = 0`.
    pub fn minus_unit(&self, i: usize) -> Option<Self> {
        if self.0[i] == 0 {
            return None;
        }
        let mut c = self.clone();
        c.0[i] -= 1;
        Some(c)
    }

    /// `Π_i k_i!` as a float.
    pub fn factorial_product(&self) -> f64 {
        self.0
            .iter()
            .map(|&k| (1..=k).map(f64::from).product::<f64>())
            .product()
    }

    /// `ln Π_i k_i!`, exact in the sense of summing `ln j` terms.
    pub fn log_factorial_product(&self) -> f64 {
        self.0
            .iter()
            .map(|&k| (2..=k).map(|j| libm::log(f64::from(j))).sum::<f64>())
            .sum()
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (n, c) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Index of an edge in [`PackingSet::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

/// An edge `(k, i)`: arrivals of type `i` move a server from `k − e_i` to `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Index of `k` among the nonzero configurations.
    pub config: usize,
    /// Customer type `i`.
    pub ty: usize,
    /// Index of `k − e_i` among the nonzero configurations, `None` when `k = e_i`.
    pub source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PackingError {
    #[error("packing set needs at least one customer type")]
    NoTypes,
    #[error("no configurations given")]
    EmptyConfigs,
    #[error("configuration {index} has {got} entries, expected {expected}")]
    WrongDimension { index: usize, got: usize, expected: usize },
    #[error("configuration {index} has negative entry {value}")]
    NegativeEntry { index: usize, value: i64 },
    #[error("configuration {index} has entry {value} beyond the supported range")]
    EntryTooLarge { index: usize, value: i64 },
    #[error("resource vector for {what} has a negative or non-finite component")]
    InvalidResource { what: &'static str },
    #[error("type {ty} has size {size_dims} dimensions, capacity has {cap_dims}")]
    ResourceDimension { ty: usize, size_dims: usize, cap_dims: usize },
    #[error("a single type-{0} customer does not fit in an empty server")]
    UnitInfeasible(usize),
    #[error("type {0} consumes no resource, the feasible set would be infinite")]
    ZeroSize(usize),
}

/// Monotone feasible family `K̄` with its edge set and derived lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingSet {
    num_types: usize,
    nonzero: Vec<Configuration>,
    index: BTreeMap<Configuration, usize>,
    edges: Vec<Edge>,
    edges_by_type: Vec<Vec<EdgeId>>,
    unit_edge: Vec<EdgeId>,
    /// `(k, edge (k + e_i, i))` for every nonzero `k` that can accept one more type-`i`.
    acceptors: Vec<Vec<(usize, EdgeId)>>,
    kappa: u64,
    added: Vec<Configuration>,
}

/// Absolute slack used when comparing floating-point resource sums to the capacity.
const RESOURCE_SLACK: f64 = 1e-9;

impl PackingSet {
    /// Downward closure of `configs ∪ {e_i} ∪ {0}`.
    ///
    /// Configurations that had to be added to make the family monotone are
    /// available afterwards through [`PackingSet::added`].
    pub fn build_explicit(num_types: usize, configs: &[Vec<i64>]) -> Result<Self, PackingError> {
        if num_types == 0 {
            return Err(PackingError::NoTypes);
        }
        if configs.is_empty() {
            return Err(PackingError::EmptyConfigs);
        }
        let mut given = BTreeSet::new();
        for (index, raw) in configs.iter().enumerate() {
            if raw.len() != num_types {
                return Err(PackingError::WrongDimension { index, got: raw.len(), expected: num_types });
            }
            let mut counts = Vec::with_capacity(num_types);
            for &value in raw {
                if value < 0 {
                    return Err(PackingError::NegativeEntry { index, value });
                }
                let v = u32::try_from(value).map_err(|_| PackingError::EntryTooLarge { index, value })?;
                counts.push(v);
            }
            given.insert(Configuration(counts));
        }

        let mut closed = BTreeSet::new();
        for k in &given {
            insert_down_set(k, &mut closed);
        }
        for i in 0..num_types {
            closed.insert(Configuration::unit(num_types, i));
        }
        closed.remove(&Configuration::zero(num_types));

        let added = closed
            .iter()
            .filter(|k| !given.contains(*k))
            .cloned()
            .collect();
        Ok(Self::from_closed(num_types, closed.into_iter().collect(), added))
    }

    /// All `k ≥ 0` with `Σ_i k_i · size_i ≤ capacity` componentwise.
    pub fn build_vector_packing(sizes: &[Vec<f64>], capacity: &[f64]) -> Result<Self, PackingError> {
        let num_types = sizes.len();
        if num_types == 0 {
            return Err(PackingError::NoTypes);
        }
        if capacity.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(PackingError::InvalidResource { what: "capacity" });
        }
        for (ty, s) in sizes.iter().enumerate() {
            if s.len() != capacity.len() {
                return Err(PackingError::ResourceDimension { ty, size_dims: s.len(), cap_dims: capacity.len() });
            }
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(PackingError::InvalidResource { what: "size" });
            }
            if s.iter().all(|&v| v == 0.0) {
                return Err(PackingError::ZeroSize(ty));
            }
            if !fits(s, capacity) {
                return Err(PackingError::UnitInfeasible(ty));
            }
        }

        let mut found = Vec::new();
        let mut counts = vec![0u32; num_types];
        let mut used = vec![0.0; capacity.len()];
        enumerate_vector(0, sizes, capacity, &mut counts, &mut used, &mut found);
        found.retain(|k: &Configuration| !k.is_zero());
        found.sort();
        Ok(Self::from_closed(num_types, found, Vec::new()))
    }

    fn from_closed(num_types: usize, nonzero: Vec<Configuration>, added: Vec<Configuration>) -> Self {
        let index: BTreeMap<Configuration, usize> =
            nonzero.iter().cloned().enumerate().map(|(n, k)| (k, n)).collect();

        let mut edges = Vec::new();
        let mut edges_by_type = vec![Vec::new(); num_types];
        let mut edge_of = BTreeMap::new();
        for (n, k) in nonzero.iter().enumerate() {
            for i in 0..num_types {
                let Some(down) = k.minus_unit(i) else { continue };
                let source = if down.is_zero() {
                    Some(None)
                } else {
                    index.get(&down).map(|&s| Some(s))
                };
                // Monotone closure guarantees k − e_i ∈ K̄.
                let source = source.expect("downward closure violated");
                let id = EdgeId(edges.len());
                edges.push(Edge { config: n, ty: i, source });
                edges_by_type[i].push(id);
                edge_of.insert((n, i), id);
            }
        }

        let unit_edge = (0..num_types)
            .map(|i| edge_of[&(index[&Configuration::unit(num_types, i)], i)])
            .collect();

        let mut acceptors = vec![Vec::new(); num_types];
        for (n, k) in nonzero.iter().enumerate() {
            for (i, acc) in acceptors.iter_mut().enumerate() {
                if let Some(&up) = index.get(&k.plus_unit(i)) {
                    acc.push((n, edge_of[&(up, i)]));
                }
            }
        }

        let kappa = 1 + nonzero.iter().map(Configuration::total).max().unwrap_or(0);

        Self { num_types, nonzero, index, edges, edges_by_type, unit_edge, acceptors, kappa, added }
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    /// Nonzero configurations `K` in canonical (lexicographic) order.
    pub fn configs(&self) -> &[Configuration] {
        &self.nonzero
    }

    pub fn len(&self) -> usize {
        self.nonzero.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzero.is_empty()
    }

    /// `K̄`, i.e. the zero configuration followed by `K`.
    pub fn closure(&self) -> Vec<Configuration> {
        let mut all = Vec::with_capacity(self.nonzero.len() + 1);
        all.push(Configuration::zero(self.num_types));
        all.extend(self.nonzero.iter().cloned());
        all
    }

    pub fn contains(&self, k: &Configuration) -> bool {
        k.is_zero() && k.num_types() == self.num_types || self.index.contains_key(k)
    }

    pub fn index_of(&self, k: &Configuration) -> Option<usize> {
        self.index.get(k).copied()
    }

    pub fn config(&self, n: usize) -> &Configuration {
        &self.nonzero[n]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn edges_of_type(&self, i: usize) -> &[EdgeId] {
        &self.edges_by_type[i]
    }

    /// The creation edge `(e_i, i)`.
    pub fn unit_edge(&self, i: usize) -> EdgeId {
        self.unit_edge[i]
    }

    pub fn unit_index(&self, i: usize) -> usize {
        self.edges[self.unit_edge[i].0].config
    }

    /// Edge `(k, i)` for configuration index `k`, if it exists.
    pub fn find_edge(&self, config: usize, ty: usize) -> Option<EdgeId> {
        self.edges_by_type[ty].iter().copied().find(|e| self.edges[e.0].config == config)
    }

    /// Occupied configurations that can take one more type-`i` customer, paired
    /// with the arrival edge that results.
    pub fn acceptors(&self, i: usize) -> &[(usize, EdgeId)] {
        &self.acceptors[i]
    }

    /// `κ = 1 + max_k Σ_i k_i`.
    pub fn kappa(&self) -> u64 {
        self.kappa
    }

    /// Configurations inserted by the downward closure in [`PackingSet::build_explicit`].
    pub fn added(&self) -> &[Configuration] {
        &self.added
    }

    /// `k_i` for configuration index `n`, as a float.
    pub fn count(&self, n: usize, i: usize) -> f64 {
        f64::from(self.nonzero[n].0[i])
    }

    /// Checks the structural invariants: monotonicity, unit configurations and the
    /// edge set definition.
    pub fn is_monotone(&self) -> bool {
        let units = (0..self.num_types).all(|i| self.index.contains_key(&Configuration::unit(self.num_types, i)));
        let down = self.nonzero.iter().all(|k| {
            (0..self.num_types).all(|i| match k.minus_unit(i) {
                Some(d) => self.contains(&d),
                None => true,
            })
        });
        units && down
    }
}

/// The admissible lower bound `1 − 1/(8κ)` on the GRAND(Z^p) exponent.
pub fn min_admissible_p(ps: &PackingSet) -> f64 {
    1.0 - 1.0 / (8.0 * ps.kappa() as f64)
}

fn insert_down_set(k: &Configuration, out: &mut BTreeSet<Configuration>) {
    if !out.insert(k.clone()) {
        return;
    }
    for i in 0..k.num_types() {
        if let Some(d) = k.minus_unit(i) {
            insert_down_set(&d, out);
        }
    }
}

fn fits(used: &[f64], capacity: &[f64]) -> bool {
    used.iter().zip(capacity).all(|(u, c)| *u <= c + RESOURCE_SLACK * c.abs().max(1.0))
}

fn enumerate_vector(
    ty: usize,
    sizes: &[Vec<f64>],
    capacity: &[f64],
    counts: &mut Vec<u32>,
    used: &mut Vec<f64>,
    out: &mut Vec<Configuration>,
) {
    if ty == sizes.len() {
        out.push(Configuration(counts.clone()));
        return;
    }
    let saved = used.clone();
    loop {
        enumerate_vector(ty + 1, sizes, capacity, counts, used, out);
        for (u, s) in used.iter_mut().zip(&sizes[ty]) {
            *u += s;
        }
        if !fits(used, capacity) {
            break;
        }
        counts[ty] += 1;
    }
    counts[ty] = 0;
    *used = saved;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: &[u32]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn explicit_single_type_two_slots() {
        let ps = PackingSet::build_explicit(1, &[vec![2]]).unwrap();
        assert_eq!(ps.configs(), &[cfg(&[1]), cfg(&[2])]);
        assert_eq!(ps.closure(), vec![cfg(&[0]), cfg(&[1]), cfg(&[2])]);
        assert_eq!(ps.kappa(), 3);
        assert_eq!(ps.edges().len(), 2);
        assert_eq!(ps.edges()[0], Edge { config: 0, ty: 0, source: None });
        assert_eq!(ps.edges()[1], Edge { config: 1, ty: 0, source: Some(0) });
        assert_eq!(ps.added(), &[cfg(&[1])]);
    }

    #[test]
    fn explicit_minimal() {
        let ps = PackingSet::build_explicit(1, &[vec![1]]).unwrap();
        assert_eq!(ps.closure(), vec![cfg(&[0]), cfg(&[1])]);
        assert_eq!(ps.kappa(), 2);
        assert!(ps.added().is_empty());
    }

    #[test]
    fn explicit_pair_closure() {
        let ps = PackingSet::build_explicit(2, &[vec![1, 1]]).unwrap();
        assert_eq!(ps.closure(), vec![cfg(&[0, 0]), cfg(&[0, 1]), cfg(&[1, 0]), cfg(&[1, 1])]);
        assert_eq!(ps.kappa(), 3);
        // (1,1) has two edges, each unit config one.
        assert_eq!(ps.edges().len(), 4);
    }

    #[test]
    fn explicit_rejects_bad_input() {
        assert_eq!(
            PackingSet::build_explicit(2, &[vec![1, -1]]),
            Err(PackingError::NegativeEntry { index: 0, value: -1 })
        );
        assert_eq!(
            PackingSet::build_explicit(2, &[vec![1]]),
            Err(PackingError::WrongDimension { index: 0, got: 1, expected: 2 })
        );
        assert_eq!(PackingSet::build_explicit(0, &[vec![]]), Err(PackingError::NoTypes));
        assert_eq!(PackingSet::build_explicit(1, &[]), Err(PackingError::EmptyConfigs));
    }

    #[test]
    fn vector_packing_scalar() {
        let ps = PackingSet::build_vector_packing(&[vec![1.0], vec![2.0]], &[3.0]).unwrap();
        let mut expected = vec![cfg(&[1, 0]), cfg(&[2, 0]), cfg(&[3, 0]), cfg(&[0, 1]), cfg(&[1, 1])];
        expected.sort();
        assert_eq!(ps.configs(), expected.as_slice());
        assert_eq!(ps.kappa(), 4);
        assert!(ps.is_monotone());
    }

    #[test]
    fn vector_packing_trivial_and_equivalence() {
        let ps = PackingSet::build_vector_packing(&[vec![1.0]], &[1.0]).unwrap();
        assert_eq!(ps.closure(), vec![cfg(&[0]), cfg(&[1])]);
        let a = PackingSet::build_vector_packing(&[vec![1.0]], &[2.0]).unwrap();
        let b = PackingSet::build_explicit(1, &[vec![2]]).unwrap();
        assert_eq!(a.configs(), b.configs());
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.kappa(), b.kappa());
    }

    #[test]
    fn vector_packing_decimal_sizes_fit_exactly() {
        let ps = PackingSet::build_vector_packing(&[vec![0.1]], &[0.3]).unwrap();
        assert_eq!(ps.kappa(), 4);
    }

    #[test]
    fn vector_packing_rejects_oversized_unit() {
        assert_eq!(
            PackingSet::build_vector_packing(&[vec![1.0], vec![4.0]], &[3.0]),
            Err(PackingError::UnitInfeasible(1))
        );
        assert_eq!(PackingSet::build_vector_packing(&[vec![0.0]], &[3.0]), Err(PackingError::ZeroSize(0)));
    }

    #[test]
    fn admissible_p() {
        let k3 = PackingSet::build_explicit(1, &[vec![2]]).unwrap();
        assert!((min_admissible_p(&k3) - (1.0 - 1.0 / 24.0)).abs() < 1e-15);
        let k2 = PackingSet::build_explicit(1, &[vec![1]]).unwrap();
        assert_eq!(min_admissible_p(&k2), 0.9375);
        let k4 = PackingSet::build_explicit(1, &[vec![3]]).unwrap();
        assert_eq!(min_admissible_p(&k4), 0.96875);
    }

    #[test]
    fn acceptors_and_unit_edges() {
        let ps = PackingSet::build_explicit(1, &[vec![2]]).unwrap();
        assert_eq!(ps.unit_edge(0), EdgeId(0));
        assert_eq!(ps.acceptors(0), &[(0, EdgeId(1))]);
        assert_eq!(ps.find_edge(1, 0), Some(EdgeId(1)));
    }

    #[test]
    fn factorials() {
        assert_eq!(cfg(&[3, 2]).factorial_product(), 12.0);
        assert!((cfg(&[3, 2]).log_factorial_product() - libm::log(12.0)).abs() < 1e-14);
        assert_eq!(cfg(&[0, 0]).factorial_product(), 1.0);
    }
}
