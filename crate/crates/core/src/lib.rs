//! Multiple imputation of blockwise-missing data with per-pattern
//! conditional Wasserstein GANs.

pub mod baselines;
pub mod error;
pub mod gan;
pub mod harness;
pub mod inference;
pub mod io;
pub mod missing_patterns;
pub mod neural;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
