//! Fixed-architecture multilayer perceptrons: forward and reverse passes,
//! the double-backprop gradient penalty, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod penalty;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{grad_input, grad_params, mlp_forward, Activation, Dense, ForwardCache, MlpGrads, MlpParams};
pub use penalty::{grad_penalty_params, gradient_penalty_batch, Penalty, PenaltyBatch};
