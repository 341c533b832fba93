//! Seeded experiment runs: train (for learning methods), then evaluate the
//! frozen controller and write the CSV artifacts and checkpoints.
//!
//! Layout under `<out_dir>/<method>-<scenario>/`:
//!
//! ```text
//! steps.csv          network metrics of every evaluation step
//! learning_log.csv   per (seed, episode, agent) training statistics
//! seeds.csv          evaluation means per seed
//! summary.csv        mean and sample deviation across seeds
//! checkpoints/seed-<s>.json
//! ```

use std::path::{Path, PathBuf};

use cellbal_core::agents::{episode_seed, train, AgentEnsemble, Controller, RuleBasedPolicy};
use cellbal_core::env::{CellularEnv, MultiAgentEnv};
use cellbal_core::nn::Checkpoint;
use cellbal_core::Error as CoreError;

use crate::artifacts::*;
use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::stats::{mean, sample_sd};

const EVAL_SALT: u64 = 0xe7a1_5eed_0000_0001;

/// Reset seed of evaluation episode `episode` for run seed `seed`; shared by
/// every method so that they face the same traffic.
pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    episode_seed(seed ^ EVAL_SALT, episode)
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub metrics: SeedRow,
    /// Empty for non-learning methods and checkpoint evaluations.
    pub learning: Vec<LearningRow>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: SummaryRow,
    pub seeds: Vec<SeedOutcome>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Source {
    Train,
    Checkpoints,
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("seed-{seed}.json"))
}

/// Trains (if needed) and evaluates every seed, writing all artifacts.
pub fn run_experiment(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    run(cfg, Source::Train, progress)
}

/// Evaluates the checkpoints of an earlier run (learning methods) or the
/// baseline controller, rewriting the evaluation artifacts only.
pub fn evaluate_experiment(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    run(cfg, Source::Checkpoints, progress)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn run(cfg: &ExperimentConfig, source: Source, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let scenario = cfg.load_scenario()?;
    let label = scenario.label();
    let dir = cfg.run_dir()?;
    create_dir(&dir.join("checkpoints"))?;
    let mut env = CellularEnv::new(scenario.clone(), cfg.env.env_config())?;
    let method = cfg.method.name().to_string();

    let mut steps = Vec::new();
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let mut learning = Vec::new();
        let controller = match cfg.method {
            Method::NonLb => Controller::NonLb { action_dim: env.action_dim() },
            Method::RuleBased => Controller::RuleBased(RuleBasedPolicy::new(cfg.rule_action.clone())?),
            Method::Learner(kind) => {
                let path = checkpoint_path(&dir, seed);
                let ensemble = match source {
                    Source::Train => {
                        progress(&format!("{method} {label} seed {seed}: training {} episodes", cfg.episodes));
                        let outcome = match train(&mut env, kind, cfg.learner.clone(), cfg.episodes, seed) {
                            Ok(o) => o,
                            Err(CoreError::Diverged(d)) => {
                                let bad = dir.join("checkpoints").join(format!("seed-{seed}-diverged.json"));
                                d.checkpoint.save(&bad)?;
                                return Err(CoreError::Diverged(d).into());
                            }
                            Err(e) => return Err(e.into()),
                        };
                        let meta = [
                            ("seed".to_string(), seed.to_string()),
                            ("episodes".to_string(), cfg.episodes.to_string()),
                            ("scenario".to_string(), label.clone()),
                        ];
                        outcome.ensemble.to_checkpoint(&meta)?.save(&path)?;
                        learning = outcome
                            .log
                            .rows
                            .iter()
                            .map(|r| LearningRow {
                                method: method.clone(),
                                scenario: label.clone(),
                                seed,
                                episode: r.episode,
                                agent: r.agent,
                                mean_reward: r.mean_reward,
                                noise: r.noise,
                                critic_loss: r.critic_loss,
                                actor_objective: r.actor_objective,
                                nature_mean: r.nature_mean,
                                updates: r.updates,
                            })
                            .collect();
                        outcome.ensemble
                    }
                    Source::Checkpoints => Checkpoint::load(&path)
                        .and_then(|ck| AgentEnsemble::from_checkpoint(&ck))
                        .map_err(|source| HarnessError::Checkpoint { path: path.display().to_string(), source })?,
                };
                if ensemble.kind() != kind || ensemble.n_agents() != env.n_agents() {
                    return Err(HarnessError::Config(vec![format!(
                        "{}: checkpoint holds {} with {} agents",
                        path.display(),
                        ensemble.kind(),
                        ensemble.n_agents()
                    )]));
                }
                Controller::Learned(Box::new(ensemble))
            }
        };
        progress(&format!("{method} {label} seed {seed}: evaluating {} episodes", cfg.eval_episodes));
        let rows = evaluate(&mut env, &controller, &method, &label, seed, cfg.eval_episodes)?;
        let metrics = seed_metrics(&method, &label, seed, &rows);
        steps.extend(rows);
        seeds.push(SeedOutcome { metrics, learning });
    }

    let seed_rows: Vec<SeedRow> = seeds.iter().map(|s| s.metrics.clone()).collect();
    let summary = summarize(&method, &scenario.scenario_id.to_string(), scenario.day, &seed_rows);
    write_records(&dir.join(STEPS_FILE), &steps)?;
    write_records(&dir.join(SEEDS_FILE), &seed_rows)?;
    write_records(&dir.join(SUMMARY_FILE), std::slice::from_ref(&summary))?;
    if source == Source::Train {
        let learning: Vec<LearningRow> = seeds.iter().flat_map(|s| s.learning.iter().cloned()).collect();
        write_records(&dir.join(LEARNING_LOG_FILE), &learning)?;
    }
    Ok(RunReport { dir, summary, seeds })
}

/// Runs `episodes` frozen evaluation episodes and records every step.
pub fn evaluate(
    env: &mut CellularEnv,
    controller: &Controller,
    method: &str,
    scenario: &str,
    seed: u64,
    episodes: usize,
) -> Result<Vec<StepRow>> {
    env.set_balancing_disabled(controller.disables_balancing());
    let mut rows = Vec::new();
    let result = (|| -> Result<()> {
        for episode in 0..episodes {
            let mut obs = env.reset(eval_seed(seed, episode))?;
            let mut step = 0;
            loop {
                let out = env.step(&controller.act(&obs)?)?;
                step += 1;
                let m = out.info.metrics.as_ref().map(|m| m.network).unwrap_or_default();
                rows.push(StepRow {
                    method: method.to_string(),
                    scenario: scenario.to_string(),
                    seed,
                    episode,
                    step,
                    g_aver: m.g_aver,
                    g_min: m.g_min,
                    g_sd: m.g_sd,
                    reward: m.reward,
                    active_ues: m.n_ues,
                    aulb_handoffs: out.info.aulb_handoffs,
                    reselections: out.info.reselections,
                });
                obs = out.obs;
                if out.done {
                    break;
                }
            }
        }
        Ok(())
    })();
    env.set_balancing_disabled(false);
    result.map(|_| rows)
}

/// Means over the evaluation steps of one seed.
pub fn seed_metrics(method: &str, scenario: &str, seed: u64, rows: &[StepRow]) -> SeedRow {
    let col = |f: fn(&StepRow) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    SeedRow {
        method: method.to_string(),
        scenario: scenario.to_string(),
        seed,
        g_aver: col(|r| r.g_aver),
        g_min: col(|r| r.g_min),
        g_sd: col(|r| r.g_sd),
        reward: col(|r| r.reward),
    }
}

/// Mean ± sample deviation across seeds.
pub fn summarize(method: &str, scenario: &str, day: u32, seeds: &[SeedRow]) -> SummaryRow {
    let col = |f: fn(&SeedRow) -> f64| seeds.iter().map(f).collect::<Vec<_>>();
    let (ga, gm, gs, r) = (col(|s| s.g_aver), col(|s| s.g_min), col(|s| s.g_sd), col(|s| s.reward));
    SummaryRow {
        schema_id: SummaryRow::SCHEMA.to_string(),
        method: method.to_string(),
        scenario: scenario.to_string(),
        day,
        seed_count: seeds.len(),
        g_aver_mean: mean(&ga),
        g_aver_sd: sample_sd(&ga),
        g_min_mean: mean(&gm),
        g_min_sd: sample_sd(&gm),
        g_sd_mean: mean(&gs),
        g_sd_sd: sample_sd(&gs),
        reward_mean: mean(&r),
        reward_sd: sample_sd(&r),
    }
}
