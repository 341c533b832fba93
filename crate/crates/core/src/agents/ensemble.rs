//! Per-agent actors and critics with their target copies, optimizers and
//! the shared nature agent of the robust learner.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::critic::{actor_gradient, critic_loss, policy_actions, Critic, CriticKind};
use super::nature::NatureAgent;
use super::replay::Batch;
use crate::env::{JointAction, JointObs};
use crate::error::{Error, Result};
use crate::nn::{soft_update, tanh, Activation, Checkpoint, CheckpointEntry, Method, Mlp, OptimizerState, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Each agent learns from its own observation, action and reward only.
    IndependentDdpg,
    /// Centralised critics over the concatenated joint observation-action.
    Maddpg,
    /// Centralised critics over attention-weighted encodings.
    Ma3c,
    /// [`LearnerKind::Ma3c`] with nature-perturbed rewards in the targets.
    RobustMa3c,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [
        LearnerKind::IndependentDdpg,
        LearnerKind::Maddpg,
        LearnerKind::Ma3c,
        LearnerKind::RobustMa3c,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::IndependentDdpg => "independent-ddpg",
            LearnerKind::Maddpg => "maddpg",
            LearnerKind::Ma3c => "ma3c",
            LearnerKind::RobustMa3c => "robust-ma3c",
        }
    }

    /// Critic architecture; without attention the attention learners fall
    /// back to a joint critic.
    pub fn critic_kind(self, attention: bool) -> CriticKind {
        match self {
            LearnerKind::IndependentDdpg => CriticKind::Local,
            LearnerKind::Maddpg => CriticKind::Joint,
            LearnerKind::Ma3c | LearnerKind::RobustMa3c if attention => CriticKind::Attention,
            LearnerKind::Ma3c | LearnerKind::RobustMa3c => CriticKind::Joint,
        }
    }

    pub fn is_robust(self) -> bool {
        self == LearnerKind::RobustMa3c
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown learner {s:?}")))
    }
}

/// Learner hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub hidden_width: usize,
    /// Width of the attention encodings.
    pub embed_dim: usize,
    /// Attention learners use a joint critic when false.
    pub attention: bool,
    pub discount: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Nature step size `base / (1 + decay * t)`.
    pub nature_lr: f64,
    pub nature_decay: f64,
    /// Half-width of the nature agent's reward band.
    pub nature_bound: f64,
    /// Exploration noise standard deviation, decayed linearly over training.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Transitions collected before the first update (at least one batch).
    pub warmup: usize,
    /// Environment steps between update rounds.
    pub update_every: usize,
    /// Gradient norm clip, 0 to disable.
    pub grad_clip: f64,
    /// Penalty on the squared pre-squash actor outputs.
    pub action_reg: f64,
    /// Critics learn the mean of all agents' rewards (the shared objective,
    /// in per-agent units) instead of their own.
    pub team_reward: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            embed_dim: 16,
            attention: true,
            discount: 0.95,
            tau: 0.01,
            batch_size: 256,
            buffer_capacity: 100_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            nature_lr: 1e-3,
            nature_decay: 1e-3,
            nature_bound: 0.5,
            noise_start: 0.3,
            noise_end: 0.05,
            warmup: 0,
            update_every: 1,
            grad_clip: 0.0,
            action_reg: 1e-3,
            team_reward: true,
        }
    }
}

impl LearnerConfig {
    /// Every violated constraint, prefixed by the field name.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        need(self.hidden_width > 0, "hidden_width: must be positive");
        need(self.embed_dim > 0, "embed_dim: must be positive");
        need((0.0..=1.0).contains(&self.discount), "discount: must lie in [0, 1]");
        need((0.0..=1.0).contains(&self.tau), "tau: must lie in [0, 1]");
        need(self.batch_size > 0, "batch_size: must be positive");
        need(self.buffer_capacity >= self.batch_size, "buffer_capacity: must hold at least one batch");
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("nature_lr", self.nature_lr),
            ("nature_decay", self.nature_decay),
            ("nature_bound", self.nature_bound),
            ("noise_start", self.noise_start),
            ("noise_end", self.noise_end),
            ("grad_clip", self.grad_clip),
            ("action_reg", self.action_reg),
        ] {
            need(v.is_finite() && v >= 0.0, &format!("{name}: must be finite and non-negative"));
        }
        need(self.update_every > 0, "update_every: must be positive");
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::config(p.join("; ")))
        }
    }

    /// Noise level for `episode` out of `episodes`.
    pub fn noise_scale(&self, episode: usize, episodes: usize) -> f64 {
        let frac = if episodes > 1 { episode as f64 / (episodes - 1) as f64 } else { 0.0 };
        self.noise_start + (self.noise_end - self.noise_start) * frac.min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentUnit {
    pub actor: Mlp,
    pub target_actor: Mlp,
    pub critic: Critic,
    pub target_critic: Critic,
    pub actor_opt: OptimizerState,
    pub critic_head_opt: OptimizerState,
    pub critic_encoder_opt: Option<OptimizerState>,
}

/// Diagnostics of one agent update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// `-mean Q` at the actor's actions.
    pub actor_objective: f64,
    /// Mean nature output before its step, robust learner only.
    pub nature_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentEnsemble {
    kind: LearnerKind,
    config: LearnerConfig,
    obs_dim: usize,
    act_dim: usize,
    pub agents: Vec<AgentUnit>,
    pub nature: Option<NatureAgent>,
}

impl AgentEnsemble {
    /// Initialises actor then critic for each agent from `rng`; the nature
    /// agent draws only from `nature_rng`.
    pub fn new<R: Rng + ?Sized, Q: Rng + ?Sized>(
        kind: LearnerKind,
        config: LearnerConfig,
        n_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut R,
        nature_rng: &mut Q,
    ) -> Result<Self> {
        config.validate()?;
        if n_agents == 0 || obs_dim == 0 || act_dim == 0 {
            return Err(Error::config("agents, observations and actions must be non-empty"));
        }
        let h = config.hidden_width;
        let critic_kind = kind.critic_kind(config.attention);
        let mut agents = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let actor = Mlp::new(&[obs_dim, h, h, act_dim], Activation::Tanh, Activation::Identity, rng);
            let critic = Critic::new(critic_kind, i, n_agents, obs_dim, act_dim, h, config.embed_dim, rng)?;
            let adam = |rate: f64, net: &Mlp| OptimizerState::new(Method::adam(), Schedule::Constant { rate }, net);
            agents.push(AgentUnit {
                actor_opt: adam(config.actor_lr, &actor)?,
                critic_head_opt: adam(config.critic_lr, &critic.head)?,
                critic_encoder_opt: critic.encoder.as_ref().map(|e| adam(config.critic_lr, e)).transpose()?,
                target_actor: actor.clone(),
                target_critic: critic.clone(),
                actor,
                critic,
            });
        }
        let nature = if kind.is_robust() {
            let schedule = Schedule::Diminishing { base: config.nature_lr, kappa: config.nature_decay };
            Some(NatureAgent::new(n_agents * (obs_dim + act_dim), h, config.nature_bound, schedule, nature_rng)?)
        } else {
            None
        };
        Ok(Self { kind, config, obs_dim, act_dim, agents, nature })
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn check_obs(&self, obs: &JointObs) -> Result<()> {
        if obs.len() != self.n_agents() || obs.iter().any(|o| o.len() != self.obs_dim) {
            return Err(Error::contract(format!(
                "expected {} observations of width {}",
                self.n_agents(),
                self.obs_dim
            )));
        }
        Ok(())
    }

    /// Deterministic joint action of the online actors.
    pub fn act(&self, obs: &JointObs) -> Result<JointAction> {
        self.check_obs(obs)?;
        obs.iter()
            .zip(&self.agents)
            .map(|(o, a)| Ok(a.actor.forward(o)?.into_iter().map(tanh).collect()))
            .collect()
    }

    /// Actor output plus `N(0, sigma^2)` noise, clamped to `[-1, 1]`.
    pub fn explore<R: Rng + ?Sized>(&self, obs: &JointObs, sigma: f64, rng: &mut R) -> Result<JointAction> {
        let mut actions = self.act(obs)?;
        for a in actions.iter_mut().flatten() {
            let z: f64 = rng.sample(StandardNormal);
            *a = (*a + sigma * z).clamp(-1.0, 1.0);
        }
        Ok(actions)
    }

    /// `discount * (1 - done) * Q'_i(s', pi'(s'))` per row.
    pub fn bootstrap(&self, i: usize, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self
            .agents
            .iter()
            .zip(&batch.next_obs)
            .map(|(a, o)| policy_actions(&a.target_actor, o.clone()))
            .collect::<Result<Vec<Array2<f64>>>>()?;
        let q = self.agents[i].target_critic.value(&batch.next_obs, &next_actions)?;
        let g = self.config.discount;
        Ok(ndarray::Zip::from(&q).and(&batch.done).map_collect(|&q, &d| g * (1.0 - d) * q))
    }

    /// Reward term of agent `i`'s targets: the observed reward (own or team
    /// total), or the nature output clamped around it for the robust learner.
    pub fn target_rewards(&self, i: usize, batch: &Batch) -> Result<Array1<f64>> {
        let r = if self.config.team_reward {
            batch.rewards.mean_axis(Axis(1)).expect("batch has agents")
        } else {
            batch.rewards.column(i).to_owned()
        };
        match &self.nature {
            Some(n) => Ok(n.perturb(n.output(batch)?.view(), r.view())),
            None => Ok(r),
        }
    }

    /// Bootstrapped critic targets `r + discount * (1 - done) * Q'`.
    pub fn critic_targets(&self, i: usize, batch: &Batch) -> Result<Array1<f64>> {
        if i >= self.n_agents() || batch.n_agents() != self.n_agents() {
            return Err(Error::contract(format!("agent {i} or batch arity out of range")));
        }
        Ok(self.target_rewards(i, batch)? + self.bootstrap(i, batch)?)
    }

    /// Nature step (robust learner), critic step, then actor step for agent `i`.
    pub fn update_agent(&mut self, i: usize, batch: &Batch) -> Result<UpdateStats> {
        let nature_mean = match &mut self.nature {
            Some(n) => Some(n.update(batch)?),
            None => None,
        };
        let y = self.critic_targets(i, batch)?;
        let clip = self.config.grad_clip;
        let unit = &mut self.agents[i];
        let (critic_loss, mut cg) = critic_loss(&unit.critic, &batch.obs, &batch.actions, y.view())?;
        if clip > 0.0 {
            cg.clip_norm(clip);
        }
        if !cg.is_finite() {
            return Err(Error::Training(format!("critic {i} gradient non-finite (loss {critic_loss})")));
        }
        unit.critic_head_opt.step(&mut unit.critic.head, &cg.head)?;
        if let (Some(enc), Some(opt), Some(g)) = (&mut unit.critic.encoder, &mut unit.critic_encoder_opt, &cg.encoder) {
            opt.step(enc, g)?;
        }
        let (actor_objective, mut ag) =
            actor_gradient(&unit.actor, &unit.critic, &batch.obs, &batch.actions, self.config.action_reg)?;
        if clip > 0.0 {
            ag.clip_norm(clip);
        }
        unit.actor_opt.step(&mut unit.actor, &ag)?;
        Ok(UpdateStats { critic_loss, actor_objective, nature_mean })
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau;
        for u in &mut self.agents {
            soft_update(&mut u.target_actor, &u.actor, tau)?;
            soft_update(&mut u.target_critic.head, &u.critic.head, tau)?;
            if let (Some(t), Some(o)) = (&mut u.target_critic.encoder, &u.critic.encoder) {
                soft_update(t, o, tau)?;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.agents.iter().all(|u| {
            u.actor.all_finite()
                && u.critic.head.all_finite()
                && u.critic.encoder.as_ref().is_none_or(Mlp::all_finite)
        }) && self.nature.as_ref().is_none_or(|n| n.policy.all_finite())
    }

    pub fn to_checkpoint(&self, extra_meta: &[(String, String)]) -> Result<Checkpoint> {
        let mut ck = Checkpoint::default();
        ck.meta = vec![
            ("learner".into(), self.kind.name().into()),
            ("n_agents".into(), self.n_agents().to_string()),
            ("obs_dim".into(), self.obs_dim.to_string()),
            ("act_dim".into(), self.act_dim.to_string()),
            (
                "config".into(),
                serde_json::to_string(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            ),
        ];
        ck.meta.extend(extra_meta.iter().cloned());
        for (i, u) in self.agents.iter().enumerate() {
            ck.push(format!("actor.{i}"), &u.actor, Some(&u.actor_opt));
            ck.push(format!("target_actor.{i}"), &u.target_actor, None);
            ck.push(format!("critic_head.{i}"), &u.critic.head, Some(&u.critic_head_opt));
            ck.push(format!("target_critic_head.{i}"), &u.target_critic.head, None);
            if let (Some(e), Some(t)) = (&u.critic.encoder, &u.target_critic.encoder) {
                ck.push(format!("critic_encoder.{i}"), e, u.critic_encoder_opt.as_ref());
                ck.push(format!("target_critic_encoder.{i}"), t, None);
            }
        }
        if let Some(n) = &self.nature {
            ck.push("nature", &n.policy, Some(&n.optimizer));
            ck.meta.push(("nature_bound".into(), n.bound.to_string()));
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |key: &str| -> Result<&str> {
            ck.meta
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key:?}")))
        };
        let num = |key: &str| -> Result<usize> {
            meta(key)?.parse().map_err(|_| Error::Checkpoint(format!("metadata {key:?} is not a count")))
        };
        let kind: LearnerKind = meta("learner")?.parse().map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
        let config: LearnerConfig =
            serde_json::from_str(meta("config")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let (n, obs_dim, act_dim) = (num("n_agents")?, num("obs_dim")?, num("act_dim")?);
        let entry = |name: String| {
            ck.get(&name).ok_or_else(|| Error::Checkpoint(format!("missing network {name:?}")))
        };
        let critic_kind = kind.critic_kind(config.attention);
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let actor = entry(format!("actor.{i}"))?;
            let head = entry(format!("critic_head.{i}"))?;
            let (enc, tenc) = if critic_kind == CriticKind::Attention {
                (Some(entry(format!("critic_encoder.{i}"))?), Some(entry(format!("target_critic_encoder.{i}"))?))
            } else {
                (None, None)
            };
            let critic = Critic::from_parts(
                critic_kind,
                i,
                n,
                obs_dim,
                act_dim,
                enc.map(|e| e.network.clone()),
                head.network.clone(),
            )?;
            let target_critic = Critic::from_parts(
                critic_kind,
                i,
                n,
                obs_dim,
                act_dim,
                tenc.map(|e| e.network.clone()),
                entry(format!("target_critic_head.{i}"))?.network.clone(),
            )?;
            if actor.network.input_dim() != obs_dim || actor.network.output_dim() != act_dim {
                return Err(Error::Checkpoint(format!("actor.{i} has the wrong shape")));
            }
            agents.push(AgentUnit {
                actor_opt: opt_of(actor)?,
                critic_head_opt: opt_of(head)?,
                critic_encoder_opt: enc.map(opt_of).transpose()?,
                actor: actor.network.clone(),
                target_actor: entry(format!("target_actor.{i}"))?.network.clone(),
                critic,
                target_critic,
            });
        }
        let nature = if kind.is_robust() {
            let e = entry("nature".into())?;
            let bound: f64 = meta("nature_bound")?
                .parse()
                .map_err(|_| Error::Checkpoint("nature_bound is not a number".into()))?;
            Some(NatureAgent::from_parts(e.network.clone(), opt_of(e)?, bound)?)
        } else {
            None
        };
        Ok(Self { kind, config, obs_dim, act_dim, agents, nature })
    }
}

fn opt_of(e: &CheckpointEntry) -> Result<OptimizerState> {
    e.optimizer.clone().ok_or_else(|| Error::Checkpoint(format!("{} lacks optimizer state", e.name)))
}
