//! Multi-agent reset/step interface.
//!
//! [`CellularEnv`] exposes the simulator as a Markov game with one agent per
//! base station; [`QuadraticGame`] is a tiny cooperative game with a known
//! equilibrium used to check that learners converge.

mod action;
mod cellular;
mod toy;

pub use action::{decode_action, encode_knobs, ACTION_DIM};
pub use cellular::{CellularEnv, CellularEnvConfig, OBS_DIM};
pub use toy::QuadraticGame;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::MetricsReport;

/// One observation vector per agent.
pub type JointObs = Vec<Vec<f64>>;
/// One raw action vector per agent, components in `[-1, 1]`.
pub type JointAction = Vec<Vec<f64>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub metrics: Option<MetricsReport>,
    pub aulb_handoffs: usize,
    pub mobility_handoffs: usize,
    pub reselections: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub obs: JointObs,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// A replay record `(s, a, r, s', done)` over all agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: JointObs,
    pub actions: JointAction,
    pub rewards: Vec<f64>,
    pub next_obs: JointObs,
    pub done: bool,
}

impl Transition {
    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }

    /// All per-agent fields have the same arity.
    pub fn is_consistent(&self) -> bool {
        let n = self.obs.len();
        self.actions.len() == n && self.rewards.len() == n && self.next_obs.len() == n
    }
}

pub trait MultiAgentEnv {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts a new episode; the seed fully determines its randomness.
    fn reset(&mut self, seed: u64) -> Result<JointObs>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<EnvStep>;
}
