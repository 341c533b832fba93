//! Action-value critics.
//!
//! - [`CriticKind::Local`]: `Q_i(s_i, a_i)`, the independent learner's view.
//! - [`CriticKind::Joint`]: `Q_i(s_1, a_1, .., s_N, a_N)`.
//! - [`CriticKind::Attention`]: every agent's `(s_j, a_j)` is encoded as
//!   `e_j = g_i(s_j, a_j)` by the critic's own encoder, weighted by
//!   attention of `e_i` over all `e_j`, and fed as
//!   `Q_i(e_i, w_1 e_1, .., w_N e_N)`.
//!
//! Joint inputs are laid out ego-first: agent `i`'s own slot comes first,
//! then the others in index order, so critics of different agents see the
//! same structure.
//!
//! Gradients with respect to parameters and to every agent's action are
//! exact, including the path through the attention weights.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::weights_into;
use crate::error::{Error, Result};
use crate::nn::{tanh, Activation, Gradients, Mlp, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticKind {
    Local,
    Joint,
    Attention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    kind: CriticKind,
    agent: usize,
    n_agents: usize,
    obs_dim: usize,
    act_dim: usize,
    pub encoder: Option<Mlp>,
    pub head: Mlp,
}

#[derive(Clone, Debug)]
pub struct CriticTape {
    head: Tape,
    attention: Option<AttentionTape>,
}

#[derive(Clone, Debug)]
struct AttentionTape {
    encoder: Tape,
    /// `batch x n_agents`, in slot order (self first).
    weights: Array2<f64>,
}

impl CriticTape {
    /// Attention weights of the recorded batch, if the critic attends.
    pub fn weights(&self) -> Option<&Array2<f64>> {
        self.attention.as_ref().map(|a| &a.weights)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticGrads {
    pub encoder: Option<Gradients>,
    pub head: Gradients,
}

impl CriticGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.encoder.as_ref().map(|g| g.flat()).unwrap_or_default();
        v.extend(self.head.flat());
        v
    }

    pub fn norm(&self) -> f64 {
        let e = self.encoder.as_ref().map_or(0.0, |g| g.norm());
        e.hypot(self.head.norm())
    }

    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            let k = max_norm / n;
            if let Some(g) = &mut self.encoder {
                g.scale(k);
            }
            self.head.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.head.first_non_finite().is_none()
            && self.encoder.as_ref().is_none_or(|g| g.first_non_finite().is_none())
    }
}

impl Critic {
    /// Networks have two hidden tanh layers of width `hidden`; the encoder
    /// has one hidden layer and a tanh output of width `embed_dim`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        kind: CriticKind,
        agent: usize,
        n_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_agents == 0 || agent >= n_agents {
            return Err(Error::config(format!("agent {agent} of {n_agents}")));
        }
        if hidden == 0 || (kind == CriticKind::Attention && embed_dim == 0) {
            return Err(Error::config("critic widths must be positive"));
        }
        let msg = obs_dim + act_dim;
        let (encoder, head_in) = match kind {
            CriticKind::Local => (None, msg),
            CriticKind::Joint => (None, n_agents * msg),
            CriticKind::Attention => (
                Some(Mlp::new(&[msg, hidden, embed_dim], Activation::Tanh, Activation::Tanh, rng)),
                (n_agents + 1) * embed_dim,
            ),
        };
        let head = Mlp::new(&[head_in, hidden, hidden, 1], Activation::Tanh, Activation::Identity, rng);
        Ok(Self { kind, agent, n_agents, obs_dim, act_dim, encoder, head })
    }

    /// Reassembles a critic from stored networks, checking their shapes.
    pub fn from_parts(
        kind: CriticKind,
        agent: usize,
        n_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        encoder: Option<Mlp>,
        head: Mlp,
    ) -> Result<Self> {
        let msg = obs_dim + act_dim;
        let head_in = match (kind, &encoder) {
            (CriticKind::Local, None) => msg,
            (CriticKind::Joint, None) => n_agents * msg,
            (CriticKind::Attention, Some(enc)) => {
                if enc.input_dim() != msg {
                    return Err(Error::contract("encoder input width does not match (obs, action)"));
                }
                (n_agents + 1) * enc.output_dim()
            }
            _ => return Err(Error::contract("encoder present iff the critic attends")),
        };
        if head.input_dim() != head_in || head.output_dim() != 1 || agent >= n_agents {
            return Err(Error::contract("critic head shape does not match its kind"));
        }
        Ok(Self { kind, agent, n_agents, obs_dim, act_dim, encoder, head })
    }

    pub fn kind(&self) -> CriticKind {
        self.kind
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.encoder.as_ref().map(Mlp::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.encoder.as_ref().map_or(0, Mlp::num_params) + self.head.num_params()
    }

    /// Encoder parameters followed by head parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.encoder.as_ref().map(Mlp::flat_params).unwrap_or_default();
        v.extend(self.head.flat_params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::contract(format!("{} values for {} critic parameters", flat.len(), self.num_params())));
        }
        let split = self.encoder.as_ref().map_or(0, Mlp::num_params);
        if let Some(enc) = &mut self.encoder {
            enc.set_flat_params(&flat[..split])?;
        }
        self.head.set_flat_params(&flat[split..])
    }

    pub fn same_shape(&self, other: &Critic) -> bool {
        self.kind == other.kind
            && self.head.same_shape(&other.head)
            && match (&self.encoder, &other.encoder) {
                (Some(a), Some(b)) => a.same_shape(b),
                (None, None) => true,
                _ => false,
            }
    }

    /// Agent occupying each input slot.
    fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.agent).chain((0..self.n_agents).filter(move |&j| j != self.agent))
    }

    fn check_inputs(&self, obs: &[Array2<f64>], actions: &[Array2<f64>]) -> Result<usize> {
        if obs.len() != self.n_agents || actions.len() != self.n_agents {
            return Err(Error::contract(format!(
                "critic expects {} agents, got {} observations and {} actions",
                self.n_agents,
                obs.len(),
                actions.len()
            )));
        }
        let b = obs[0].nrows();
        for (o, a) in obs.iter().zip(actions) {
            if o.dim() != (b, self.obs_dim) || a.dim() != (b, self.act_dim) {
                return Err(Error::contract(format!(
                    "critic input shapes {:?}/{:?}, expected ({b}, {})/({b}, {})",
                    o.dim(),
                    a.dim(),
                    self.obs_dim,
                    self.act_dim
                )));
            }
        }
        if b == 0 {
            return Err(Error::contract("empty critic batch"));
        }
        Ok(b)
    }

    /// `e_j = g(s_j, a_j)` for one agent's batch.
    pub fn encode(&self, obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::contract("critic has no encoder"))?;
        if obs.nrows() != actions.nrows() {
            return Err(Error::contract("observation and action batches differ in length"));
        }
        enc.predict(concatenate![Axis(1), obs, actions])
    }

    pub fn forward(&self, obs: &[Array2<f64>], actions: &[Array2<f64>]) -> Result<(Array1<f64>, CriticTape)> {
        let b = self.check_inputs(obs, actions)?;
        let i = self.agent;
        let (input, attention) = match self.kind {
            CriticKind::Local => (concatenate![Axis(1), obs[i], actions[i]], None),
            CriticKind::Joint => {
                let parts: Vec<ArrayView2<f64>> = self
                    .slots()
                    .flat_map(|j| [obs[j].view(), actions[j].view()])
                    .collect();
                (concatenate(Axis(1), &parts).expect("equal rows"), None)
            }
            CriticKind::Attention => {
                let enc = self.encoder.as_ref().expect("attention critic has an encoder");
                let msgs: Vec<Array2<f64>> = self
                    .slots()
                    .map(|j| concatenate![Axis(1), obs[j], actions[j]])
                    .collect();
                let views: Vec<ArrayView2<f64>> = msgs.iter().map(|m| m.view()).collect();
                let tape = enc.forward_batch(concatenate(Axis(0), &views).expect("equal widths"))?;
                let e = tape.output();
                let d = enc.output_dim();
                let n = self.n_agents;
                let mut weights = Array2::zeros((b, n));
                let mut z = Array2::zeros((b, (n + 1) * d));
                let mut w = vec![0.0; n];
                for r in 0..b {
                    let keys: Vec<ArrayView1<f64>> = (0..n).map(|j| e.row(j * b + r)).collect();
                    weights_into(keys[0], &keys, &mut w);
                    z.slice_mut(s![r, 0..d]).assign(&keys[0]);
                    for j in 0..n {
                        weights[[r, j]] = w[j];
                        z.slice_mut(s![r, (j + 1) * d..(j + 2) * d]).assign(&(&keys[j] * w[j]));
                    }
                }
                (z, Some(AttentionTape { encoder: tape, weights }))
            }
        };
        let head = self.head.forward_batch(input)?;
        let q = head.output().column(0).to_owned();
        Ok((q, CriticTape { head, attention }))
    }

    pub fn value(&self, obs: &[Array2<f64>], actions: &[Array2<f64>]) -> Result<Array1<f64>> {
        Ok(self.forward(obs, actions)?.0)
    }

    /// Back-propagates `dq = dL/dQ` per row. Returns parameter gradients
    /// and `dL/d(a_j)` for every agent (zero for actions the critic ignores).
    pub fn backward(&self, tape: &CriticTape, dq: ArrayView1<f64>) -> Result<(CriticGrads, Vec<Array2<f64>>)> {
        let b = dq.len();
        let upstream = dq.insert_axis(Axis(1));
        let (head, dx) = self.head.backward(&tape.head, upstream)?;
        let (obs_dim, act_dim) = (self.obs_dim, self.act_dim);
        let msg = obs_dim + act_dim;
        let mut d_actions = vec![Array2::zeros((b, act_dim)); self.n_agents];
        let encoder = match self.kind {
            CriticKind::Local => {
                d_actions[self.agent].assign(&dx.slice(s![.., obs_dim..msg]));
                None
            }
            CriticKind::Joint => {
                for (k, j) in self.slots().enumerate() {
                    d_actions[j].assign(&dx.slice(s![.., k * msg + obs_dim..(k + 1) * msg]));
                }
                None
            }
            CriticKind::Attention => {
                let enc = self.encoder.as_ref().expect("attention critic has an encoder");
                let att = tape.attention.as_ref().ok_or_else(|| Error::contract("tape lacks attention record"))?;
                let e = att.encoder.output();
                let d = enc.output_dim();
                let n = self.n_agents;
                let i = 0;
                let scale = 1.0 / (d as f64).sqrt();
                let mut de = Array2::<f64>::zeros((n * b, d));
                let mut dw = vec![0.0; n];
                for r in 0..b {
                    let w = att.weights.row(r);
                    {
                        let mut row = de.row_mut(i * b + r);
                        row += &dx.slice(s![r, 0..d]);
                    }
                    for j in 0..n {
                        let dz = dx.slice(s![r, (j + 1) * d..(j + 2) * d]);
                        de.row_mut(j * b + r).scaled_add(w[j], &dz);
                        dw[j] = dz.dot(&e.row(j * b + r));
                    }
                    let mean: f64 = (0..n).map(|k| w[k] * dw[k]).sum();
                    let ei = e.row(i * b + r);
                    for j in 0..n {
                        let dc = w[j] * (dw[j] - mean) * scale;
                        let ej = e.row(j * b + r);
                        de.row_mut(i * b + r).scaled_add(dc, &ej);
                        de.row_mut(j * b + r).scaled_add(dc, &ei);
                    }
                }
                let (g, dmsg) = enc.backward(&att.encoder, de.view())?;
                for (k, j) in self.slots().enumerate() {
                    d_actions[j].assign(&dmsg.slice(s![k * b..(k + 1) * b, obs_dim..msg]));
                }
                Some(g)
            }
        };
        Ok((CriticGrads { encoder, head }, d_actions))
    }
}

/// Mean squared Bellman error `mean((Q - y)^2)` and its parameter gradient.
pub fn critic_loss(
    critic: &Critic,
    obs: &[Array2<f64>],
    actions: &[Array2<f64>],
    targets: ArrayView1<f64>,
) -> Result<(f64, CriticGrads)> {
    let (q, tape) = critic.forward(obs, actions)?;
    if targets.len() != q.len() {
        return Err(Error::contract(format!("{} targets for a batch of {}", targets.len(), q.len())));
    }
    let diff = &q - &targets;
    let b = q.len() as f64;
    let loss = diff.mapv(|x| x * x).sum() / b;
    if !loss.is_finite() {
        return Err(Error::Training(format!("critic {} loss is {loss}", critic.agent)));
    }
    let dq = diff * (2.0 / b);
    let (grads, _) = critic.backward(&tape, dq.view())?;
    Ok((loss, grads))
}

/// Actions `tanh(z)` of an actor network whose raw output is `z`.
pub fn policy_actions(actor: &Mlp, obs: Array2<f64>) -> Result<Array2<f64>> {
    Ok(actor.predict(obs)?.mapv_into(tanh))
}

/// Deterministic policy gradient for agent `i`: the actor's action
/// `tanh(z)` replaces `a_i` in the batch, other actions stay as sampled, and
/// the returned gradient descends `-mean Q + action_reg * mean(z^2)`. Also
/// returns that objective.
pub fn actor_gradient(
    actor: &Mlp,
    critic: &Critic,
    obs: &[Array2<f64>],
    actions: &[Array2<f64>],
    action_reg: f64,
) -> Result<(f64, Gradients)> {
    let i = critic.agent;
    if obs.len() <= i || actions.len() != obs.len() {
        return Err(Error::contract("actor batch does not cover the critic's agent"));
    }
    let tape = actor.forward_batch(obs[i].clone())?;
    let z = tape.output();
    let mut acts = actions.to_vec();
    acts[i] = z.mapv(tanh);
    let (q, ctape) = critic.forward(obs, &acts)?;
    let b = q.len() as f64;
    let reg_scale = action_reg / z.len() as f64;
    let objective = -q.sum() / b + reg_scale * z.iter().map(|v| v * v).sum::<f64>();
    let dq = Array1::from_elem(q.len(), -1.0 / b);
    let (_, d_actions) = critic.backward(&ctape, dq.view())?;
    let mut dz = d_actions[i].clone();
    ndarray::Zip::from(&mut dz)
        .and(&acts[i])
        .and(z)
        .for_each(|d, &a, &z| *d = *d * (1.0 - a * a) + 2.0 * reg_scale * z);
    let (grads, _) = actor.backward(&tape, dz.view())?;
    if let Some((layer, idx)) = grads.first_non_finite() {
        return Err(Error::Training(format!("actor {i} gradient non-finite at layer {layer}, index {idx}")));
    }
    Ok((objective, grads))
}
