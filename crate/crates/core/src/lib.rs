//! Infinite-server bin packing under GRAND placement policies.
//!
//! Customers of several types arrive as Poisson streams, stay for exponential
//! service times and must be packed into servers whose feasible contents form a
//! monotone family. This crate holds the allocation-only core:
//!
//! * [`packing`]: monotone configuration families and their edge sets,
//! * [`state`], [`policy`], [`engine`]: the exact CTMC under GRAND(Z^p) / GRAND(aZ),
//! * [`fluid`]: the fluid LP benchmark `L*`, optimality certificates and distances to `X*`,
//! * [`lyapunov`]: the `L^(a)` Lyapunov function, its drift and product-form minimizer,
//! * [`analysis`]: Poisson tail bounds and occupancy floor tables.
//!
//! File formats, the experiment harness and the CLI live in the `grand-sim` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod engine;
pub mod fluid;
pub mod linalg;
pub mod lyapunov;
pub mod packing;
pub mod policy;
pub mod rng;
pub mod simplex;
pub mod state;
pub mod stats;

pub use engine::{simulate, RunRecord, RunSpec};
pub use fluid::{solve_lp, LpSolution};
pub use packing::{min_admissible_p, Configuration, EdgeId, PackingSet};
pub use policy::Policy;
pub use rng::SimRng;
pub use state::{FluidPoint, SystemState};
