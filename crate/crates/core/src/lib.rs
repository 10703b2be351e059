//! Extremes of multi-type branching random walks with regularly varying
//! displacements.
//!
//! The crate simulates the normalized extremal point process of a
//! multi-type branching random walk, samples its Cox cluster limit directly,
//! and provides the statistics used to compare the two.

pub mod branching;
pub mod brw;
pub mod config;
pub mod displacement;
pub mod error;
pub mod experiments;
pub mod limit;
pub mod pp_stats;
pub mod rng;
pub mod tree_transforms;

pub use error::{Error, Result};
