//! First-order optimizers with constant or diminishing step sizes.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Constant { rate: f64 },
    /// `base / (1 + kappa t)`, which decays monotonically to zero.
    Diminishing { base: f64, kappa: f64 },
}

impl Schedule {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant { rate } => rate,
            Schedule::Diminishing { base, kappa } => base / (1.0 + kappa * t as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { rate } => rate.is_finite() && rate >= 0.0,
            Schedule::Diminishing { base, kappa } => {
                base.is_finite() && base >= 0.0 && kappa.is_finite() && kappa >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid step-size schedule {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Plain gradient descent.
    Plain,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub method: Method,
    pub schedule: Schedule,
    /// Number of updates applied so far.
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(method: Method, schedule: Schedule, net: &Mlp) -> Result<Self> {
        schedule.validate()?;
        let n = match method {
            Method::Plain => 0,
            Method::Adam { .. } => net.num_params(),
        };
        Ok(Self {
            method,
            schedule,
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        })
    }

    pub fn current_rate(&self) -> f64 {
        self.schedule.rate(self.step)
    }

    /// Moves `params` against `grads`. Non-finite gradients abort the update
    /// and leave both parameters and state untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != params.layers().len()
            || grads
                .layers
                .iter()
                .zip(params.layers())
                .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.len() != l.bias.len())
        {
            return Err(Error::contract("gradient shapes do not match parameters"));
        }
        if let Some((layer, idx)) = grads.first_non_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at layer {layer}, index {idx} (optimizer step {}, gradient norm {})",
                self.step,
                grads.norm()
            )));
        }
        if matches!(self.method, Method::Adam { .. }) && self.first_moment.len() != params.num_params() {
            return Err(Error::contract("optimizer state was built for a different network"));
        }
        let lr = self.schedule.rate(self.step);
        match self.method {
            Method::Plain => params.zip_params_mut(grads, |_, p, g| *p -= lr * g),
            Method::Adam { beta1, beta2, eps } => {
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (m, v) = (&mut self.first_moment, &mut self.second_moment);
                params.zip_params_mut(grads, |i, p, g| {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Dense};
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: array![[v]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn grad(v: f64) -> Gradients {
        let mut g = Gradients::zeros_like(&scalar(0.0));
        g.layers[0].weight[[0, 0]] = v;
        g
    }

    #[test]
    fn plain_step_hand_computation() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(Method::Plain, Schedule::Constant { rate: 0.1 }, &p).unwrap();
        opt.step(&mut p, &grad(1.0)).unwrap();
        assert!((p.layers()[0].weight[[0, 0]] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        for method in [Method::Plain, Method::adam()] {
            let mut p = net.clone();
            let mut opt = OptimizerState::new(method, Schedule::Constant { rate: 0.5 }, &p).unwrap();
            for _ in 0..5 {
                opt.step(&mut p, &Gradients::zeros_like(&net)).unwrap();
            }
            assert_eq!(p, net);
        }
    }

    #[test]
    fn diminishing_schedule_closed_form() {
        let s = Schedule::Diminishing { base: 0.1, kappa: 1e-3 };
        assert_eq!(s.rate(0), 0.1);
        assert!((s.rate(10_000) - 0.1 / 11.0).abs() < 1e-18);
        let mut prev = s.rate(0);
        for t in [1, 10, 100, 1_000, 1_000_000, 1_000_000_000] {
            assert!(s.rate(t) < prev);
            prev = s.rate(t);
        }
        assert!(s.rate(u64::MAX) < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(Method::adam(), Schedule::Constant { rate: 0.1 }, &p).unwrap();
        let err = opt.step(&mut p, &grad(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Training(ref m) if m.contains("layer 0")), "{err}");
        assert_eq!(p, scalar(1.0));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // minimise (w - 3)^2
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(Method::adam(), Schedule::Constant { rate: 0.05 }, &p).unwrap();
        for _ in 0..2000 {
            let w = p.layers()[0].weight[[0, 0]];
            opt.step(&mut p, &grad(2.0 * (w - 3.0))).unwrap();
        }
        assert!((p.layers()[0].weight[[0, 0]] - 3.0).abs() < 1e-3);
        let _ = Array2::<f64>::zeros((1, 1));
    }
}
