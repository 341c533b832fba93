//! Adversarial nature agent.
//!
//! A scalar network `n(s_hat, a_hat)` over the joint observation and joint
//! action replaces the observed reward `r` in the critic target by
//! `clamp(n, r - bound, r + bound)`. It is trained by plain gradient descent
//! on its own output with a diminishing step size, i.e. towards the worst
//! reward inside the uncertainty band.

use ndarray::{Array1, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::Batch;
use crate::error::{Error, Result};
use crate::nn::{Activation, Method, Mlp, OptimizerState, Schedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NatureAgent {
    pub policy: Mlp,
    pub optimizer: OptimizerState,
    /// Half-width of the reward uncertainty band.
    pub bound: f64,
}

impl NatureAgent {
    pub fn new<R: Rng + ?Sized>(joint_dim: usize, hidden: usize, bound: f64, schedule: Schedule, rng: &mut R) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::config(format!("nature bound must be finite and non-negative, got {bound}")));
        }
        let policy = Mlp::new(&[joint_dim, hidden, 1], Activation::Tanh, Activation::Identity, rng);
        let optimizer = OptimizerState::new(Method::Plain, schedule, &policy)?;
        Ok(Self { policy, optimizer, bound })
    }

    pub fn from_parts(policy: Mlp, optimizer: OptimizerState, bound: f64) -> Result<Self> {
        if policy.output_dim() != 1 {
            return Err(Error::contract("nature policy must have a scalar output"));
        }
        Ok(Self { policy, optimizer, bound })
    }

    /// Unclamped output per batch row.
    pub fn output(&self, batch: &Batch) -> Result<Array1<f64>> {
        Ok(self.policy.predict(batch.joint_obs_actions())?.column(0).to_owned())
    }

    /// `clamp(n, r - bound, r + bound)` for each row.
    pub fn perturb(&self, nature: ArrayView1<f64>, rewards: ArrayView1<f64>) -> Array1<f64> {
        let b = self.bound;
        ndarray::Zip::from(&nature)
            .and(&rewards)
            .map_collect(|&n, &r| n.clamp(r - b, r + b))
    }

    /// One descent step on the mean output over the batch. Returns the mean
    /// output before the step.
    pub fn update(&mut self, batch: &Batch) -> Result<f64> {
        let tape = self.policy.forward_batch(batch.joint_obs_actions())?;
        let out = tape.output();
        let mean = out.mean_axis(Axis(0)).expect("non-empty batch")[0];
        if !mean.is_finite() {
            return Err(Error::Training(format!("nature output is {mean}")));
        }
        let upstream = ndarray::Array2::from_elem(out.dim(), 1.0 / out.nrows() as f64);
        let (grads, _) = self.policy.backward(&tape, upstream.view())?;
        self.optimizer.step(&mut self.policy, &grads)?;
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Transition;
    use crate::nn::Dense;
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch() -> Batch {
        let t = Transition {
            obs: vec![vec![0.5], vec![-0.25]],
            actions: vec![vec![0.1], vec![0.3]],
            rewards: vec![1.0, 2.0],
            next_obs: vec![vec![0.0], vec![0.0]],
            done: false,
        };
        Batch::from_transitions(&[&t]).unwrap()
    }

    fn linear(schedule: Schedule) -> NatureAgent {
        let layer = Dense { weight: arr2(&[[1.0], [2.0], [-1.0], [0.5]]), bias: arr1(&[0.2]), activation: Activation::Identity };
        let policy = Mlp::from_layers(vec![layer]).unwrap();
        let optimizer = OptimizerState::new(Method::Plain, schedule, &policy).unwrap();
        NatureAgent::from_parts(policy, optimizer, 0.5).unwrap()
    }

    #[test]
    fn linear_update_decreases_output() {
        let mut n = linear(Schedule::Constant { rate: 0.1 });
        let b = batch();
        let before = n.output(&b).unwrap()[0];
        // 0.5 - 0.5 - 0.1 + 0.15 + 0.2
        assert!((before - 0.25).abs() < 1e-12);
        n.update(&b).unwrap();
        let after = n.output(&b).unwrap()[0];
        // gradient wrt (w, b) is (x, 1): the output drops by rate * (|x|^2 + 1)
        let x2 = 0.25 + 0.0625 + 0.01 + 0.09;
        assert!((before - after - 0.1 * (x2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut n = linear(Schedule::Constant { rate: 0.0 });
        let before = n.policy.clone();
        n.update(&batch()).unwrap();
        assert_eq!(n.policy, before);
    }

    #[test]
    fn diminishing_steps_vanish() {
        let mut n = linear(Schedule::Diminishing { base: 0.1, kappa: 1.0 });
        let b = batch();
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let p0 = n.policy.flat_params();
            n.update(&b).unwrap();
            let p1 = n.policy.flat_params();
            let change: f64 = p0.iter().zip(&p1).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            assert!(change <= last + 1e-15);
            last = change;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn clamp_band() {
        let n = NatureAgent::new(4, 3, 0.5, Schedule::Constant { rate: 0.0 }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y = n.perturb(arr1(&[-10.0, 1.2, 9.0]).view(), arr1(&[1.0, 1.0, 1.0]).view());
        assert_eq!(y.to_vec(), vec![0.5, 1.2, 1.5]);
        let zero = NatureAgent { bound: 0.0, ..n };
        let r = arr1(&[0.3, -0.7]);
        assert_eq!(zero.perturb(arr1(&[5.0, -5.0]).view(), r.view()), r);
        assert!(NatureAgent::new(4, 3, -1.0, Schedule::Constant { rate: 0.0 }, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
