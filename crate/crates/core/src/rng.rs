//! Reproducible random streams.
//!
//! Every run draws from a ChaCha8 keystream. The 64-bit root seed selects the key and
//! a 64-bit stream id selects an independent keystream under that key, so one root
//! seed fans out into as many non-overlapping replica streams as a sweep needs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counter-based generator for one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self(inner)
    }

    /// A generator on a different stream under the same key, positioned at its start.
    pub fn split(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(self.0.get_seed());
        inner.set_stream(stream);
        Self(inner)
    }

    pub fn stream(&self) -> u64 {
        self.0.get_stream()
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}
