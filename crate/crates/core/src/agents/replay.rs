//! Bounded FIFO of transitions with uniform sampling (with replacement).

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::env::Transition;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

/// Column-major view of sampled transitions: one `batch x dim` matrix per
/// agent for observations and actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Vec<Array2<f64>>,
    pub actions: Vec<Array2<f64>>,
    /// `batch x n_agents`.
    pub rewards: Array2<f64>,
    pub next_obs: Vec<Array2<f64>>,
    /// 1.0 for terminal transitions.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }

    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let first = ts.first().ok_or_else(|| Error::contract("empty batch"))?;
        let n = first.n_agents();
        if ts.iter().any(|t| !t.is_consistent() || t.n_agents() != n) {
            return Err(Error::contract("transitions in a batch disagree on the number of agents"));
        }
        let b = ts.len();
        let stack = |get: &dyn Fn(&Transition) -> &Vec<f64>| -> Result<Array2<f64>> {
            let dim = get(ts[0]).len();
            let mut m = Array2::zeros((b, dim));
            for (r, t) in ts.iter().enumerate() {
                let v = get(t);
                if v.len() != dim {
                    return Err(Error::contract("ragged vectors in a batch"));
                }
                m.row_mut(r).assign(&ndarray::ArrayView1::from(v.as_slice()));
            }
            Ok(m)
        };
        let mut obs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut next_obs = Vec::with_capacity(n);
        for j in 0..n {
            obs.push(stack(&|t: &Transition| &t.obs[j])?);
            actions.push(stack(&|t: &Transition| &t.actions[j])?);
            next_obs.push(stack(&|t: &Transition| &t.next_obs[j])?);
        }
        let rewards = Array2::from_shape_fn((b, n), |(r, j)| ts[r].rewards[j]);
        let done = ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect();
        Ok(Self { obs, actions, rewards, next_obs, done })
    }

    /// `[s_1 .. s_N, a_1 .. a_N]` per row.
    pub fn joint_obs_actions(&self) -> Array2<f64> {
        let parts: Vec<_> = self.obs.iter().chain(&self.actions).map(|m| m.view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &parts).expect("equal row counts")
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.is_consistent() {
            return Err(Error::contract("inconsistent transition"));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    pub fn get(&self, idx: usize) -> Option<&Transition> {
        self.items.get(idx)
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::contract(format!(
                "cannot sample {batch} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        let picked: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&picked)
    }
}
