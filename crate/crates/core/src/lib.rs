//! Stochastic relaxed fixed point iterations.
//!
//! Randomly relaxed Krasnosel'skii-Mann iterations, stochastic gradient
//! descent, and an extrapolated random block-iterative method for convex
//! feasibility, together with the half-space cut primitive they share.

pub mod block;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fixedpoint;
pub mod geometry;
pub mod operators;
pub mod point;
pub mod relaxation;
pub mod rng;
pub mod trace;

pub use error::{Error, ErrorClass, Result};
pub use point::Point;
