//! Versioned JSON dump of named networks and their optimizer state.
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so save followed by load reproduces every parameter bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::optim::OptimizerState;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub network: Mlp,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Free-form metadata (algorithm, seed, episode...).
    pub meta: Vec<(String, String)>,
    pub entries: Vec<CheckpointEntry>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self { version: CHECKPOINT_VERSION, meta: Vec::new(), entries: Vec::new() }
    }
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, network: &Mlp, optimizer: Option<&OptimizerState>) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            network: network.clone(),
            optimizer: optimizer.cloned(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        for e in &ck.entries {
            Mlp::from_layers(e.network.layers().to_vec())
                .map_err(|err| Error::Checkpoint(format!("{}: {err}", e.name)))?;
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
