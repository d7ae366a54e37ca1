//! Simulation and control stack for a planar handed-shearing-auxetic soft
//! robot steered through a classified command stream.

// NaN-rejecting parameter checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod harness;
pub mod model;
pub mod planner;
pub mod signal;
pub mod simulator;

pub use error::{Error, Result};
