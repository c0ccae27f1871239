//! Thompson-sampling bandit with burden-penalized surrogate rewards, a
//! zero-inflated Poisson user simulator with habituation, and the Monte Carlo
//! sweep harness used to tune the penalty weights.

// Negated comparisons such as `!(x > 0.0)` are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod fit;
pub mod sim;
pub mod sweep;
pub mod synthetic;

pub use error::{Error, Result};
