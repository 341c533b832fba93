//! Experiment configuration: TOML schema, profiles, overrides and
//! validation that reports every problem at once.
//!
//! A configuration file looks like
//!
//! ```toml
//! method = "ma3c"
//! scenario = "B"            # built-in name or path to a scenario file
//! seeds = [0, 1, 2, 3, 4]
//! profile = "desk"          # optional; supplies every other default
//! episodes = 1500
//! eval_episodes = 20
//! out_dir = "runs"
//!
//! [env]
//! n_bs = 3
//!
//! [learner]
//! batch_size = 64
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cellbal_core::agents::{LearnerConfig, LearnerKind};
use cellbal_core::env::{CellularEnvConfig, ACTION_DIM};
use cellbal_core::sim::{LinkModel, SimParams, TrafficScenario};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "CELLBAL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    NonLb,
    RuleBased,
    Learner(LearnerKind),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::NonLb,
        Method::RuleBased,
        Method::Learner(LearnerKind::IndependentDdpg),
        Method::Learner(LearnerKind::Maddpg),
        Method::Learner(LearnerKind::Ma3c),
        Method::Learner(LearnerKind::RobustMa3c),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::NonLb => "non-lb",
            Method::RuleBased => "rule-based",
            Method::Learner(k) => k.name(),
        }
    }

    pub fn learner(self) -> Option<LearnerKind> {
        match self {
            Method::Learner(k) => Some(k),
            _ => None,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("method: unknown method {s:?}; expected one of {}", Self::valid_names()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 3 sites, short runs; the comparative acceptance protocol.
    #[default]
    Desk,
    /// 7 sites and long runs with the conventional learner sizing.
    Full,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }

    pub fn episodes(self) -> usize {
        match self {
            Profile::Desk => 1500,
            Profile::Full => 30_000,
        }
    }

    pub fn eval_episodes(self) -> usize {
        20
    }

    pub fn env(self) -> EnvSettings {
        match self {
            Profile::Desk => EnvSettings {
                n_bs: 3,
                step_duration_ms: Some(10_000.0),
                mean_active_session_s: 30.0,
                ..EnvSettings::default()
            },
            Profile::Full => EnvSettings { n_bs: 7, ..EnvSettings::default() },
        }
    }

    pub fn learner(self) -> LearnerConfig {
        match self {
            Profile::Desk => LearnerConfig {
                hidden_width: 32,
                embed_dim: 8,
                discount: 0.5,
                batch_size: 64,
                update_every: 2,
                actor_lr: 5e-4,
                noise_start: 0.5,
                ..LearnerConfig::default()
            },
            Profile::Full => LearnerConfig::default(),
        }
    }
}

/// Network and simulator settings outside the traffic scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSettings {
    pub n_bs: usize,
    pub inter_site_distance_m: f64,
    /// Replaces the scenario's step duration when set.
    pub step_duration_ms: Option<f64>,
    pub mean_active_session_s: f64,
    pub interference_scale: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        let env = CellularEnvConfig::default();
        Self {
            n_bs: env.n_bs,
            inter_site_distance_m: env.inter_site_distance_m,
            step_duration_ms: None,
            mean_active_session_s: env.sim.mean_active_session_s,
            interference_scale: env.link.interference_scale,
        }
    }
}

impl EnvSettings {
    pub fn env_config(&self) -> CellularEnvConfig {
        CellularEnvConfig {
            n_bs: self.n_bs,
            inter_site_distance_m: self.inter_site_distance_m,
            link: LinkModel { interference_scale: self.interference_scale, ..LinkModel::default() },
            sim: SimParams { mean_active_session_s: self.mean_active_session_s, ..SimParams::default() },
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_bs == 0 {
            out.push("env.n_bs: must be positive".into());
        }
        for (name, v) in [
            ("env.inter_site_distance_m", self.inter_site_distance_m),
            ("env.mean_active_session_s", self.mean_active_session_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name}: must be positive"));
            }
        }
        if !(self.interference_scale.is_finite() && self.interference_scale >= 0.0) {
            out.push("env.interference_scale: must be finite and non-negative".into());
        }
        if let Some(d) = self.step_duration_ms {
            if !(d.is_finite() && d > 0.0) {
                out.push("env.step_duration_ms: must be positive".into());
            }
        }
        out
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Built-in scenario name or scenario file path.
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
    pub profile: Profile,
    pub env: EnvSettings,
    pub learner: LearnerConfig,
    /// Constant action of the rule-based method, applied at every site.
    pub rule_action: Vec<f64>,
}

impl ExperimentConfig {
    /// Loads the traffic scenario with the step-duration override applied.
    pub fn load_scenario(&self) -> Result<TrafficScenario> {
        let mut s = if TrafficScenario::builtin_names().any(|n| n == self.scenario) || self.scenario == "C" {
            TrafficScenario::builtin(&self.scenario)?
        } else {
            TrafficScenario::load(&self.scenario)?
        };
        if let Some(d) = self.env.step_duration_ms {
            s.step_duration_ms = d;
        }
        Ok(s)
    }

    /// Directory holding this experiment's artifacts.
    pub fn run_dir(&self) -> Result<PathBuf> {
        let label = self.load_scenario()?.label();
        Ok(self.out_dir.join(format!("{}-{}", self.method, label)))
    }
}

/// Unresolved settings as they come from a file and the command line.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    pub method: Option<String>,
    pub scenario: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub episodes: Option<i64>,
    pub eval_episodes: Option<i64>,
    pub out_dir: Option<PathBuf>,
    pub profile: Option<Profile>,
    pub env: toml::Table,
    pub learner: toml::Table,
    pub rule_action: Option<Vec<f64>>,
    /// Problems found while reading the source text.
    pub problems: Vec<String>,
}

fn take<T: serde::de::DeserializeOwned>(table: &mut toml::Table, key: &str, problems: &mut Vec<String>) -> Option<T> {
    let value = table.remove(key)?;
    match value.try_into() {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{key}: {}", e.message().trim()));
            None
        }
    }
}

fn take_table(table: &mut toml::Table, key: &str, problems: &mut Vec<String>) -> toml::Table {
    match table.remove(key) {
        None => toml::Table::new(),
        Some(toml::Value::Table(t)) => t,
        Some(_) => {
            problems.push(format!("{key}: expected a table"));
            toml::Table::new()
        }
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Self {
        let mut raw = RawConfig::default();
        let mut table: toml::Table = match text.parse() {
            Ok(t) => t,
            Err(e) => {
                raw.problems.push(format!("syntax: {}", e.message().trim()));
                return raw;
            }
        };
        let p = &mut raw.problems;
        raw.method = take(&mut table, "method", p);
        raw.scenario = take(&mut table, "scenario", p);
        raw.seeds = take(&mut table, "seeds", p);
        raw.episodes = take(&mut table, "episodes", p);
        raw.eval_episodes = take(&mut table, "eval_episodes", p);
        raw.out_dir = take(&mut table, "out_dir", p);
        raw.profile = take(&mut table, "profile", p);
        raw.rule_action = take(&mut table, "rule_action", p);
        raw.env = take_table(&mut table, "env", p);
        raw.learner = take_table(&mut table, "learner", p);
        for key in table.keys() {
            p.push(format!("{key}: unknown key"));
        }
        raw
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(vec![format!("reading {}: {e}", path.display())]))?;
        Ok(Self::parse(&text))
    }

    /// Applies defaults and checks every invariant, reporting all
    /// violations together.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let mut problems = self.problems;
        let profile = self.profile.unwrap_or_default();
        let method = match self.method.as_deref() {
            None => {
                problems.push(format!("method: required; expected one of {}", Method::valid_names()));
                None
            }
            Some(m) => m.parse::<Method>().map_err(|e| problems.push(e)).ok(),
        };
        if self.scenario.is_none() {
            problems.push("scenario: required (built-in name or file path)".into());
        }
        let seeds = match self.seeds {
            Some(s) if !s.is_empty() => s,
            _ => {
                problems.push("seeds: non-empty list required".into());
                Vec::new()
            }
        };
        let mut count = |name: &str, v: Option<i64>, default: usize| match v {
            None => default,
            Some(n) if n >= 0 => n as usize,
            Some(n) => {
                problems.push(format!("{name}: must be non-negative, got {n}"));
                default
            }
        };
        let episodes = count("episodes", self.episodes, profile.episodes());
        let eval_episodes = count("eval_episodes", self.eval_episodes, profile.eval_episodes());
        let env: EnvSettings = overlay("env", profile.env(), self.env, &mut problems);
        problems.extend(env.problems());
        let learner: LearnerConfig = overlay("learner", profile.learner(), self.learner, &mut problems);
        problems.extend(learner.problems().into_iter().map(|p| format!("learner.{p}")));
        let rule_action = self.rule_action.unwrap_or_else(|| vec![0.0; ACTION_DIM]);
        if rule_action.len() != ACTION_DIM {
            problems.push(format!("rule_action: expected {ACTION_DIM} components, got {}", rule_action.len()));
        }
        if rule_action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            problems.push("rule_action: components must lie in [-1, 1]".into());
        }
        let out_dir = self.out_dir.unwrap_or_else(default_out_dir);
        let config = match (method, self.scenario) {
            (Some(method), Some(scenario)) if problems.is_empty() => ExperimentConfig {
                method,
                scenario,
                seeds,
                episodes,
                eval_episodes,
                out_dir,
                profile,
                env,
                learner,
                rule_action,
            },
            _ => return Err(HarnessError::Config(problems)),
        };
        if let Err(e) = config.load_scenario() {
            return Err(HarnessError::Config(vec![format!("scenario: {e}")]));
        }
        Ok(config)
    }
}

/// Replaces the fields of `base` named in `user`; unknown names and type
/// mismatches are reported under `section`.
fn overlay<T: Serialize + serde::de::DeserializeOwned + Clone>(
    section: &str,
    base: T,
    user: toml::Table,
    problems: &mut Vec<String>,
) -> T {
    let mut merged = match toml::Table::try_from(&base) {
        Ok(t) => t,
        Err(e) => {
            problems.push(format!("{section}: {e}"));
            return base;
        }
    };
    for (key, value) in user {
        let mut probe = merged.clone();
        probe.insert(key.clone(), value.clone());
        match toml::Value::Table(probe).try_into::<T>() {
            Ok(_) => {
                merged.insert(key, value);
            }
            Err(e) => problems.push(format!("{section}.{key}: {}", e.message().trim())),
        }
    }
    toml::Value::Table(merged).try_into().unwrap_or(base)
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Reads and resolves a configuration file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    RawConfig::load(path)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problems(text: &str) -> Vec<String> {
        match RawConfig::parse(text).resolve() {
            Err(HarnessError::Config(p)) => p,
            other => panic!("expected a report, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_profile_defaults() {
        let c = RawConfig::parse("method = \"ma3c\"\nscenario = \"B\"\nseeds = [3]\n").resolve().unwrap();
        assert_eq!(c.method, Method::Learner(LearnerKind::Ma3c));
        assert_eq!(c.seeds, vec![3]);
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.episodes, Profile::Desk.episodes());
        assert_eq!(c.eval_episodes, 20);
        assert_eq!(c.env, Profile::Desk.env());
        assert_eq!(c.learner, Profile::Desk.learner());
        assert_eq!(c.rule_action, vec![0.0; ACTION_DIM]);
        assert_eq!(c.load_scenario().unwrap().step_duration_ms, 10_000.0);
    }

    #[test]
    fn full_profile_keeps_scenario_timing() {
        let c = RawConfig::parse("method = \"non-lb\"\nscenario = \"A\"\nseeds = [1]\nprofile = \"full\"\n")
            .resolve()
            .unwrap();
        assert_eq!(c.env.n_bs, 7);
        assert_eq!(c.learner, LearnerConfig::default());
        assert_eq!(c.load_scenario().unwrap().step_duration_ms, 1000.0);
    }

    #[test]
    fn missing_seeds_reported() {
        let p = problems("method = \"ma3c\"\nscenario = \"B\"\n");
        assert_eq!(p, vec!["seeds: non-empty list required".to_string()]);
        let p = problems("method = \"ma3c\"\nscenario = \"B\"\nseeds = []\n");
        assert_eq!(p, vec!["seeds: non-empty list required".to_string()]);
    }

    #[test]
    fn unknown_method_lists_all_six() {
        let p = problems("method = \"qmix\"\nscenario = \"B\"\nseeds = [0]\n");
        assert_eq!(p.len(), 1);
        for m in Method::ALL {
            assert!(p[0].contains(m.name()), "{}", p[0]);
        }
    }

    #[test]
    fn every_violation_is_reported() {
        let p = problems(
            "method = \"bogus\"\nscenario = \"B\"\nepisodes = -1\ncolour = 3\n\
             [env]\nn_bs = 0\n[learner]\nbatch_size = 0\nwidth = 2\n",
        );
        let has = |s: &str| p.iter().any(|x| x.starts_with(s));
        assert!(has("method:"), "{p:?}");
        assert!(has("seeds:"));
        assert!(has("episodes:"));
        assert!(has("colour:"));
        assert!(has("env.n_bs:"));
        assert!(has("learner.width:"));
        assert!(has("learner.batch_size:"));
    }

    #[test]
    fn overrides_apply() {
        let c = RawConfig::parse(
            "method = \"rule-based\"\nscenario = \"C-day2\"\nseeds = [0, 1]\nepisodes = 0\n\
             rule_action = [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -1]\n[env]\nn_bs = 1\n[learner]\ntau = 0.5\n",
        )
        .resolve()
        .unwrap();
        assert_eq!(c.episodes, 0);
        assert_eq!(c.env.n_bs, 1);
        assert_eq!(c.learner.tau, 0.5);
        assert_eq!(c.learner.batch_size, 64);
        assert_eq!(c.rule_action[11], -1.0);
        assert_eq!(c.load_scenario().unwrap().label(), "C-day2");
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
