//! Multi-base-station cellular load balancing as a Markov game.
//!
//! The crate is layered bottom-up:
//!
//! - [`sim`]: discrete-time network simulator (topology, mobility, traffic,
//!   link rates, active/idle UE balancing).
//! - [`metrics`]: average/minimum throughput, throughput deviation, reward.
//! - [`env`]: reset/step multi-agent interface over the simulator, plus a
//!   quadratic cooperative toy game used to check learner convergence.
//! - [`nn`]: small feed-forward approximators with reverse-mode gradients,
//!   optimizers and checkpoints.
//! - [`agents`]: replay buffer, DDPG-family learners (independent, joint
//!   critic, attention critic, attention critic with nature agent) and the
//!   non-learning baselines.

pub mod agents;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod sim;

pub use error::{Divergence, Error, Result};
