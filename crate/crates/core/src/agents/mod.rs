//! Learners and baselines.
//!
//! Four DDPG-family learners share one training loop and differ only in
//! their critics and reward targets; see [`LearnerKind`].

mod attention;
mod baselines;
mod critic;
mod ensemble;
mod nature;
mod replay;
mod train;

pub use attention::attention_weights;
pub use baselines::{Controller, RuleBasedPolicy};
pub use critic::{actor_gradient, critic_loss, policy_actions, Critic, CriticGrads, CriticKind, CriticTape};
pub use ensemble::{AgentEnsemble, AgentUnit, LearnerConfig, LearnerKind, UpdateStats};
pub use nature::NatureAgent;
pub use replay::{Batch, ReplayBuffer};
pub use train::{episode_seed, train, LearningLog, LogRow, TrainOutcome, Trainer};
