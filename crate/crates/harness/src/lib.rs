//! Experiment harness for the cellular load-balancing learners.
//!
//! - [`config`]: TOML experiment configuration, `desk`/`full` profiles and
//!   validation that reports every problem.
//! - [`run`]: seeded train-then-evaluate runs writing CSV artifacts and
//!   checkpoints.
//! - [`artifacts`]: CSV schemas (each file carries a `# schema:` line).
//! - [`plot`]: SVG bar charts and learning curves.
//! - [`stats`]: descriptive statistics and an exact rank-sum test.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod run;
pub mod stats;

pub use config::{validate_config, ExperimentConfig, Method, Profile, RawConfig};
pub use error::{HarnessError, Result};
pub use plot::emit_plots;
pub use run::{evaluate_experiment, run_experiment, RunReport};
