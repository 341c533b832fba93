use std::path::PathBuf;
use std::process::ExitCode;

use cellbal::config::{default_out_dir, Profile, RawConfig};
use cellbal::{emit_plots, evaluate_experiment, run_experiment, HarnessError, RunReport};
use clap::{Args, Parser, Subcommand};

/// Multi-site cellular load balancing: training, evaluation and charts.
#[derive(Parser)]
#[command(name = "cellbal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (learning methods) and evaluate every seed.
    Train(ExperimentArgs),
    /// Evaluate saved checkpoints, or a baseline, without training.
    Evaluate(ExperimentArgs),
    /// Render SVG charts from the CSVs under the output directory.
    Plot {
        /// Directory searched (recursively) for summary and learning-log CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra CSV files or directories to include.
        inputs: Vec<PathBuf>,
    },
    /// Check a configuration and print it with defaults filled in.
    Validate(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// non-lb, rule-based, independent-ddpg, maddpg, ma3c or robust-ma3c.
    #[arg(long)]
    method: Option<String>,
    /// Built-in scenario name (A, B, C-day1..3) or scenario file.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated seeds, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<i64>,
    /// Output root; defaults to $CELLBAL_OUT_DIR or ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
}

impl ExperimentArgs {
    fn raw(&self) -> Result<RawConfig, HarnessError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        raw.method = self.method.clone().or(raw.method);
        raw.scenario = self.scenario.clone().or(raw.scenario);
        raw.seeds = self.seeds.clone().or(raw.seeds);
        raw.episodes = self.episodes.or(raw.episodes);
        raw.out_dir = self.out.clone().or(raw.out_dir);
        raw.profile = self.profile.or(raw.profile);
        Ok(raw)
    }
}

fn print_report(r: &RunReport) {
    let s = &r.summary;
    println!(
        "{} on {} ({} seeds): reward {:.4} ± {:.4}, g_aver {:.4}, g_min {:.4}, g_sd {:.4}",
        s.method, s.scenario, s.seed_count, s.reward_mean, s.reward_sd, s.g_aver_mean, s.g_min_mean, s.g_sd_mean
    );
    println!("artifacts in {}", r.dir.display());
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut progress = |msg: &str| eprintln!("{msg}");
    match cli.command {
        Command::Train(args) => print_report(&run_experiment(&args.raw()?.resolve()?, &mut progress)?),
        Command::Evaluate(args) => print_report(&evaluate_experiment(&args.raw()?.resolve()?, &mut progress)?),
        Command::Validate(args) => {
            let c = args.raw()?.resolve()?;
            println!("method = {:?}", c.method.name());
            println!("scenario = {:?}", c.scenario);
            println!("seeds = {:?}", c.seeds);
            println!("profile = {:?}", c.profile.name());
            println!("episodes = {}", c.episodes);
            println!("eval_episodes = {}", c.eval_episodes);
            println!("out_dir = {:?}", c.out_dir.display().to_string());
            println!("rule_action = {:?}", c.rule_action);
            let env = toml::to_string(&c.env).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
            let learner = toml::to_string(&c.learner).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
            println!("\n[env]\n{env}\n[learner]\n{learner}");
        }
        Command::Plot { out, mut inputs } => {
            let root = out.unwrap_or_else(default_out_dir);
            inputs.insert(0, root.clone());
            for p in emit_plots(&inputs, &root.join("plots"))? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
