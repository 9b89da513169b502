//! File formats, experiment harness and invariant checks on top of `grand-core`.

pub mod check;
pub mod config;
pub mod csv;
pub mod sweep;

pub use config::Config;
pub use sweep::{run_sweep, GapReport, SweepSpec};
