//! CSV artifacts. Every file starts with a `# schema: <id>` comment line
//! followed by a header row; readers skip `#` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const STEPS_FILE: &str = "steps.csv";
pub const LEARNING_LOG_FILE: &str = "learning_log.csv";
pub const SEEDS_FILE: &str = "seeds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub trait Record: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const COLUMNS: &'static [&'static str];
}

/// Network metrics of one evaluation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub episode: usize,
    pub step: usize,
    pub g_aver: f64,
    pub g_min: f64,
    pub g_sd: f64,
    pub reward: f64,
    pub active_ues: usize,
    pub aulb_handoffs: usize,
    pub reselections: usize,
}

impl Record for StepRow {
    const SCHEMA: &'static str = "cellbal.steps.v1";
    const COLUMNS: &'static [&'static str] = &[
        "method",
        "scenario",
        "seed",
        "episode",
        "step",
        "g_aver",
        "g_min",
        "g_sd",
        "reward",
        "active_ues",
        "aulb_handoffs",
        "reselections",
    ];
}

/// One (episode, agent) row of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRow {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub episode: usize,
    pub agent: usize,
    pub mean_reward: f64,
    pub noise: f64,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub nature_mean: Option<f64>,
    pub updates: usize,
}

impl Record for LearningRow {
    const SCHEMA: &'static str = "cellbal.learning_log.v1";
    const COLUMNS: &'static [&'static str] = &[
        "method",
        "scenario",
        "seed",
        "episode",
        "agent",
        "mean_reward",
        "noise",
        "critic_loss",
        "actor_objective",
        "nature_mean",
        "updates",
    ];
}

/// Evaluation means of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    pub g_aver: f64,
    pub g_min: f64,
    pub g_sd: f64,
    pub reward: f64,
}

impl Record for SeedRow {
    const SCHEMA: &'static str = "cellbal.seeds.v1";
    const COLUMNS: &'static [&'static str] = &["method", "scenario", "seed", "g_aver", "g_min", "g_sd", "reward"];
}

/// Mean and sample deviation across seeds of the per-seed evaluation means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_id: String,
    pub method: String,
    pub scenario: String,
    pub day: u32,
    pub seed_count: usize,
    pub g_aver_mean: f64,
    pub g_aver_sd: f64,
    pub g_min_mean: f64,
    pub g_min_sd: f64,
    pub g_sd_mean: f64,
    pub g_sd_sd: f64,
    pub reward_mean: f64,
    pub reward_sd: f64,
}

impl Record for SummaryRow {
    const SCHEMA: &'static str = "cellbal.summary.v1";
    const COLUMNS: &'static [&'static str] = &[
        "schema_id",
        "method",
        "scenario",
        "day",
        "seed_count",
        "g_aver_mean",
        "g_aver_sd",
        "g_min_mean",
        "g_min_sd",
        "g_sd_mean",
        "g_sd_sd",
        "reward_mean",
        "reward_sd",
    ];
}

pub fn write_records<T: Record>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# schema: {}", T::SCHEMA).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

/// Reads typed rows, naming the first required column the file lacks.
pub fn read_records<T: Record>(path: &Path) -> Result<Vec<T>> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    for col in T::COLUMNS {
        if !headers.iter().any(|h| h == *col) {
            return Err(HarnessError::Schema { file: path.display().to_string(), column: col.to_string() });
        }
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Untyped view of a CSV artifact.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// An empty file (no header) reads as a table without columns.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = reader(path)?;
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { file: path.display().to_string(), columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| HarnessError::Schema { file: self.file.clone(), column: name.to_string() })
    }

    /// Numeric value of `col` in `row`; empty or unparsable cells are `None`.
    pub fn number(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row].get(col).and_then(|s| s.parse().ok())
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).map_or("", String::as_str)
    }
}
