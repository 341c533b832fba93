use super::{EnvStep, JointObs, MultiAgentEnv, StepInfo};
use crate::error::{Error, Result};

/// One-shot cooperative game: every agent receives
/// `-(sum_i a_i^2) - sum_{i<j} (a_i - a_j)^2`, maximised only at `a = 0`.
/// Observations are a constant 1.
#[derive(Clone, Debug)]
pub struct QuadraticGame {
    n_agents: usize,
}

impl QuadraticGame {
    pub fn new(n_agents: usize) -> Self {
        assert!(n_agents >= 1);
        Self { n_agents }
    }

    pub fn payoff(actions: &[f64]) -> f64 {
        let own: f64 = actions.iter().map(|a| a * a).sum();
        let mut pair = 0.0;
        for i in 0..actions.len() {
            for j in i + 1..actions.len() {
                let d = actions[i] - actions[j];
                pair += d * d;
            }
        }
        -own - pair
    }
}

impl MultiAgentEnv for QuadraticGame {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<JointObs> {
        Ok(vec![vec![1.0]; self.n_agents])
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<EnvStep> {
        if actions.len() != self.n_agents || actions.iter().any(|a| a.len() != 1) {
            return Err(Error::contract(format!(
                "expected {} one-dimensional actions",
                self.n_agents
            )));
        }
        let a: Vec<f64> = actions.iter().map(|a| a[0]).collect();
        let r = Self::payoff(&a);
        Ok(EnvStep {
            obs: vec![vec![1.0]; self.n_agents],
            rewards: vec![r; self.n_agents],
            done: true,
            info: StepInfo::default(),
        })
    }
}
