//! Activated Random Walk on ℤ.
//!
//! Site-wise (instruction-stack) construction of the dynamics, exact
//! stabilization on finite intervals, and the probes built on it: E_k
//! boundary events, half-line scans, nucleation trials, reach trials and
//! critical-density estimation.

pub mod cli;
pub mod experiments;
pub mod initdist;
pub mod model;
pub mod rng;
pub mod stabilizer;
pub mod stacks;
pub mod stats;

pub use model::{Configuration, Interval, Odometer, SiteState};
pub use stabilizer::{Policy, Side, StabilizeReport};
pub use stacks::{Instruction, InstructionSource, Params};
