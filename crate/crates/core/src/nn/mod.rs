//! Differentiable function approximators: MLPs, optimizers, checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod optim;

pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use mlp::{soft_update, tanh, Activation, Dense, Gradients, Mlp, Tape};
pub use optim::{Method, OptimizerState, Schedule};
