//! Non-learning controllers and a common wrapper over everything that can
//! drive the environment.

use super::ensemble::AgentEnsemble;
use crate::env::{JointAction, JointObs};
use crate::error::{Error, Result};

/// Fixed offsets regardless of what is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleBasedPolicy {
    action: Vec<f64>,
}

impl RuleBasedPolicy {
    pub fn new(action: Vec<f64>) -> Result<Self> {
        if action.is_empty() || action.iter().any(|x| !(-1.0..=1.0).contains(x)) {
            return Err(Error::config("rule-based action must be non-empty with entries in [-1, 1]"));
        }
        Ok(Self { action })
    }

    /// All-zero raw action, i.e. every offset at the middle of its range.
    pub fn midpoint(action_dim: usize) -> Self {
        Self { action: vec![0.0; action_dim] }
    }

    pub fn action(&self) -> &[f64] {
        &self.action
    }

    pub fn act(&self, obs: &JointObs) -> JointAction {
        vec![self.action.clone(); obs.len()]
    }
}

/// Anything that chooses joint actions during evaluation.
#[derive(Clone, Debug)]
pub enum Controller {
    /// Balancing switched off in the environment; actions are ignored.
    NonLb { action_dim: usize },
    RuleBased(RuleBasedPolicy),
    Learned(Box<AgentEnsemble>),
}

impl Controller {
    /// Whether the environment must run with balancing disabled.
    pub fn disables_balancing(&self) -> bool {
        matches!(self, Controller::NonLb { .. })
    }

    pub fn act(&self, obs: &JointObs) -> Result<JointAction> {
        match self {
            Controller::NonLb { action_dim } => Ok(vec![vec![0.0; *action_dim]; obs.len()]),
            Controller::RuleBased(p) => Ok(p.act(obs)),
            Controller::Learned(e) => e.act(obs),
        }
    }
}
