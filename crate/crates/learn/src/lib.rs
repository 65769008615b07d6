//! Optimizers for UFO gate synthesis: a TRPO agent acting in a noisy
//! control environment, and a finite-difference Adam baseline.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod baseline;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod mlp;
pub mod policy;
pub mod train;
pub mod trpo;

pub use error::{LearnError, Result};
