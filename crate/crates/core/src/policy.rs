//! GRAND placement: uniform choice among zero-servers and occupied servers that fit.

use rand::Rng;
use thiserror::Error;

use crate::packing::{EdgeId, PackingSet};
use crate::state::SystemState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("GRAND(Z^p) needs 0 < p < 1, got {0}")]
    ExponentOutOfRange(f64),
    #[error("GRAND(aZ) needs a > 0, got {0}")]
    FractionOutOfRange(f64),
}

/// A GRAND variant, defined by how many zero-servers it keeps as a function of `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// `X_0 = ⌈Z^p⌉`.
    GrandZp { p: f64 },
    /// `X_0 = ⌈aZ⌉`.
    GrandAz { a: f64 },
}

/// Distance to an integer below which `⌈·⌉` snaps to that integer.
const CEIL_GUARD: f64 = 1e-9;

impl Policy {
    pub fn grand_zp(p: f64) -> Result<Self, PolicyError> {
        if p > 0.0 && p < 1.0 {
            Ok(Self::GrandZp { p })
        } else {
            Err(PolicyError::ExponentOutOfRange(p))
        }
    }

    pub fn grand_az(a: f64) -> Result<Self, PolicyError> {
        if a > 0.0 && a.is_finite() {
            Ok(Self::GrandAz { a })
        } else {
            Err(PolicyError::FractionOutOfRange(a))
        }
    }

    /// Short name used in CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            Self::GrandZp { .. } => "grand-zp",
            Self::GrandAz { .. } => "grand-az",
        }
    }

    /// `p` or `a`.
    pub fn parameter(&self) -> f64 {
        match *self {
            Self::GrandZp { p } => p,
            Self::GrandAz { a } => a,
        }
    }

    /// Number of zero-servers for `Z` customers in the system.
    pub fn zero_servers(&self, z: u64) -> u64 {
        if z == 0 {
            return 0;
        }
        let v = match *self {
            Self::GrandZp { p } => libm::pow(z as f64, p),
            Self::GrandAz { a } => a * z as f64,
        };
        guarded_ceil(v)
    }

    /// Chooses the edge along which a type-`i` arrival is placed.
    ///
    /// One uniform draw over the `X_(i)` available servers is walked through the
    /// zero-server bucket first and then the acceptor configurations in canonical order.
    pub fn place<R: Rng + ?Sized>(&self, ps: &PackingSet, st: &SystemState, i: usize, rng: &mut R) -> EdgeId {
        let x0 = self.zero_servers(st.z());
        let n = st.avail(ps, i, x0);
        if n == 0 {
            return ps.unit_edge(i);
        }
        let mut u = rng.gen_range(0..n);
        if u < x0 {
            return ps.unit_edge(i);
        }
        u -= x0;
        for &(k, edge) in ps.acceptors(i) {
            let c = st.count(k);
            if u < c {
                return edge;
            }
            u -= c;
        }
        unreachable!("uniform draw exceeded the available server count")
    }
}

fn guarded_ceil(v: f64) -> u64 {
    let nearest = libm::round(v);
    let snapped = if (v - nearest).abs() <= CEIL_GUARD { nearest } else { libm::ceil(v) };
    snapped as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use alloc::vec;

    #[test]
    fn zero_server_counts() {
        let zp = Policy::grand_zp(0.9).unwrap();
        assert_eq!(zp.zero_servers(100), 64);
        assert_eq!(zp.zero_servers(0), 0);
        assert_eq!(zp.zero_servers(1), 1);
        let az = Policy::grand_az(0.1).unwrap();
        assert_eq!(az.zero_servers(100), 10);
        assert_eq!(az.zero_servers(0), 0);
        assert_eq!(az.zero_servers(1), 1);
        // 0.5^2 exact powers must not jitter upward.
        assert_eq!(Policy::grand_zp(0.5).unwrap().zero_servers(10_000), 100);
        // 0.3 * 10 is 3.0000000000000004 in binary floating point.
        assert_eq!(Policy::grand_az(0.3).unwrap().zero_servers(10), 3);
    }

    #[test]
    fn parameter_validation() {
        assert!(Policy::grand_zp(1.0).is_err());
        assert!(Policy::grand_zp(0.0).is_err());
        assert!(Policy::grand_az(0.0).is_err());
        assert!(Policy::grand_az(2.0).is_ok());
    }

    #[test]
    fn empty_state_creates_unit() {
        let ps = PackingSet::build_explicit(2, &[vec![1, 1]]).unwrap();
        let st = SystemState::empty(&ps);
        let mut rng = SimRng::new(1);
        for pol in [Policy::grand_zp(0.5).unwrap(), Policy::grand_az(0.2).unwrap()] {
            for i in 0..2 {
                assert_eq!(pol.place(&ps, &st, i, &mut rng), ps.unit_edge(i));
            }
        }
    }

    #[test]
    fn full_servers_force_creation() {
        let ps = PackingSet::build_explicit(1, &[vec![2]]).unwrap();
        let st = SystemState::from_counts(&ps, vec![0, 50]).unwrap();
        let pol = Policy::grand_az(0.1).unwrap();
        let mut rng = SimRng::new(9);
        for _ in 0..1000 {
            assert_eq!(pol.place(&ps, &st, 0, &mut rng), ps.unit_edge(0));
        }
    }
}
