//! Episode loop: act with exploration noise, store transitions, and after
//! each step update every agent (nature, critic, actor) and the targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::{AgentEnsemble, LearnerConfig, LearnerKind};
use super::replay::ReplayBuffer;
use crate::env::{MultiAgentEnv, Transition};
use crate::error::{Divergence, Error, Result};

/// Stream reserved for the nature agent so that it never perturbs the
/// draws of the other learners.
const NATURE_STREAM: u64 = 0x6e61_7475_7265;

/// Reset seed of training episode `episode` under run seed `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (episode as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// One row per (episode, agent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub agent: usize,
    pub mean_reward: f64,
    pub noise: f64,
    /// Means over the updates of the episode; `None` before learning starts.
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub nature_mean: Option<f64>,
    pub updates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningLog {
    pub rows: Vec<LogRow>,
}

impl LearningLog {
    /// Per-agent mean rewards of `episode`.
    pub fn episode_rewards(&self, episode: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.episode == episode).map(|r| r.mean_reward).collect()
    }

    pub fn episodes(&self) -> usize {
        self.rows.iter().map(|r| r.episode + 1).max().unwrap_or(0)
    }
}

/// Owns everything that changes during training.
pub struct Trainer {
    pub ensemble: AgentEnsemble,
    pub buffer: ReplayBuffer,
    pub log: LearningLog,
    episodes: usize,
    episode: usize,
    seed: u64,
    env_steps: u64,
    rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub ensemble: AgentEnsemble,
    pub log: LearningLog,
}

#[derive(Clone, Default)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

impl Trainer {
    /// `episodes` sets the exploration schedule.
    pub fn new<E: MultiAgentEnv>(
        env: &E,
        kind: LearnerKind,
        config: LearnerConfig,
        episodes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nature_rng = ChaCha8Rng::seed_from_u64(seed);
        nature_rng.set_stream(NATURE_STREAM);
        let buffer = ReplayBuffer::new(config.buffer_capacity)?;
        let ensemble = AgentEnsemble::new(
            kind,
            config,
            env.n_agents(),
            env.obs_dim(),
            env.action_dim(),
            &mut rng,
            &mut nature_rng,
        )?;
        Ok(Self { ensemble, buffer, log: LearningLog::default(), episodes, episode: 0, seed, env_steps: 0, rng })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.episodes
    }

    fn warmup(&self) -> usize {
        self.ensemble.config().warmup.max(self.ensemble.config().batch_size)
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::Training(message) => {
                let meta = [
                    ("seed".to_string(), self.seed.to_string()),
                    ("episode".to_string(), self.episode.to_string()),
                ];
                match self.ensemble.to_checkpoint(&meta) {
                    Ok(checkpoint) => Error::Diverged(Box::new(Divergence { episode: self.episode, message, checkpoint })),
                    Err(other) => other,
                }
            }
            other => other,
        }
    }

    /// Plays one training episode with updates after every step.
    pub fn run_episode<E: MultiAgentEnv>(&mut self, env: &mut E) -> Result<()> {
        let n = self.ensemble.n_agents();
        let sigma = self.ensemble.config().noise_scale(self.episode, self.episodes);
        let mut obs = env.reset(episode_seed(self.seed, self.episode))?;
        let mut rewards = vec![Acc::default(); n];
        let mut critic = vec![Acc::default(); n];
        let mut actor = vec![Acc::default(); n];
        let mut nature = vec![Acc::default(); n];
        loop {
            let actions = self.ensemble.explore(&obs, sigma, &mut self.rng)?;
            let step = env.step(&actions)?;
            for (acc, r) in rewards.iter_mut().zip(&step.rewards) {
                acc.add(*r);
            }
            self.buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                actions,
                rewards: step.rewards,
                next_obs: step.obs.clone(),
                done: step.done,
            })?;
            obs = step.obs;
            self.env_steps += 1;
            let cfg = self.ensemble.config();
            if self.buffer.len() >= self.warmup() && self.env_steps % cfg.update_every as u64 == 0 {
                let batch_size = cfg.batch_size;
                for i in 0..n {
                    let batch = self.buffer.sample(batch_size, &mut self.rng)?;
                    let stats = self.ensemble.update_agent(i, &batch).map_err(|e| self.diverged(e))?;
                    critic[i].add(stats.critic_loss);
                    actor[i].add(stats.actor_objective);
                    if let Some(m) = stats.nature_mean {
                        nature[i].add(m);
                    }
                }
                self.ensemble.soft_update_targets()?;
                if !self.ensemble.all_finite() {
                    return Err(self.diverged(Error::Training("non-finite parameters after update".into())));
                }
            }
            if step.done {
                break;
            }
        }
        for i in 0..n {
            self.log.rows.push(LogRow {
                episode: self.episode,
                agent: i,
                mean_reward: rewards[i].mean().unwrap_or(0.0),
                noise: sigma,
                critic_loss: critic[i].mean(),
                actor_objective: actor[i].mean(),
                nature_mean: nature[i].mean(),
                updates: critic[i].n,
            });
        }
        self.episode += 1;
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome { ensemble: self.ensemble, log: self.log }
    }
}

/// Trains `kind` on `env` for `episodes` episodes.
pub fn train<E: MultiAgentEnv>(
    env: &mut E,
    kind: LearnerKind,
    config: LearnerConfig,
    episodes: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env, kind, config, episodes, seed)?;
    while !trainer.is_finished() {
        trainer.run_episode(env)?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvStep, JointObs, QuadraticGame, StepInfo};

    fn toy() -> LearnerConfig {
        LearnerConfig { hidden_width: 8, embed_dim: 4, batch_size: 8, buffer_capacity: 64, ..Default::default() }
    }

    #[test]
    fn zero_episodes_gives_untrained_ensemble() {
        let mut env = QuadraticGame::new(2);
        let out = train(&mut env, LearnerKind::Ma3c, toy(), 0, 9).unwrap();
        assert!(out.log.rows.is_empty());
        let fresh = Trainer::new(&env, LearnerKind::Ma3c, toy(), 0, 9).unwrap();
        assert_eq!(out.ensemble, fresh.ensemble);
    }

    #[test]
    fn identical_seeds_identical_runs() {
        for kind in LearnerKind::ALL {
            let a = train(&mut QuadraticGame::new(2), kind, toy(), 40, 5).unwrap();
            let b = train(&mut QuadraticGame::new(2), kind, toy(), 40, 5).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.ensemble, b.ensemble);
            assert_eq!(a.log.rows.len(), 80);
            assert!(a.log.rows.iter().skip(20).all(|r| r.updates == 1));
            assert_eq!(a.log.rows.iter().any(|r| r.nature_mean.is_some()), kind.is_robust());
        }
    }

    #[test]
    fn single_agent_attention_off_matches_independent_learner() {
        let cfg = LearnerConfig { attention: false, ..toy() };
        let a = train(&mut QuadraticGame::new(1), LearnerKind::IndependentDdpg, cfg.clone(), 60, 1).unwrap();
        let b = train(&mut QuadraticGame::new(1), LearnerKind::Ma3c, cfg, 60, 1).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.ensemble.agents[0].actor, b.ensemble.agents[0].actor);
        assert_eq!(a.ensemble.agents[0].critic.head, b.ensemble.agents[0].critic.head);
    }

    /// Pays NaN rewards once learning starts.
    struct Poisoned {
        steps: usize,
    }

    impl MultiAgentEnv for Poisoned {
        fn n_agents(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn reset(&mut self, _seed: u64) -> Result<JointObs> {
            Ok(vec![vec![0.0]])
        }
        fn step(&mut self, _a: &[Vec<f64>]) -> Result<EnvStep> {
            self.steps += 1;
            let r = if self.steps > 3 { f64::NAN } else { 1.0 };
            Ok(EnvStep { obs: vec![vec![0.0]], rewards: vec![r], done: true, info: StepInfo::default() })
        }
    }

    #[test]
    fn divergence_aborts_with_checkpoint() {
        let cfg = LearnerConfig { batch_size: 2, buffer_capacity: 8, ..toy() };
        let mut env = Poisoned { steps: 0 };
        match train(&mut env, LearnerKind::IndependentDdpg, cfg, 50, 0) {
            Err(Error::Diverged(d)) => {
                assert!(d.message.contains("loss"), "{}", d.message);
                assert!(d.checkpoint.get("actor.0").is_some());
                assert!(d.episode < 50);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
