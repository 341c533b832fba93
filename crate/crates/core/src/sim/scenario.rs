//! Traffic scenarios: UE population, packet and mobility statistics.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
            ScenarioId::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficScenario {
    pub scenario_id: ScenarioId,
    pub day: u32,
    pub total_ues: usize,
    pub active_ues: usize,
    pub idle_ues: usize,
    /// Mean packet size in megabits.
    pub mean_packet_size_mbit: f64,
    pub mean_interarrival_ms: f64,
    pub mean_speed_mps: f64,
    /// Steps per episode.
    pub episode_length: usize,
    pub step_duration_ms: f64,
}

const BUILTIN: [(&str, &str); 5] = [
    ("A", include_str!("../../../../scenarios/A.toml")),
    ("B", include_str!("../../../../scenarios/B.toml")),
    ("C-day1", include_str!("../../../../scenarios/C-day1.toml")),
    ("C-day2", include_str!("../../../../scenarios/C-day2.toml")),
    ("C-day3", include_str!("../../../../scenarios/C-day3.toml")),
];

impl TrafficScenario {
    /// Names accepted by [`TrafficScenario::builtin`].
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    /// One of the shipped scenario rows: `A`, `B`, `C-day1`, `C-day2`, `C-day3`
    /// (`C` alone means day 1).
    pub fn builtin(name: &str) -> Result<Self> {
        let name = if name == "C" { "C-day1" } else { name };
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config(format!("no built-in scenario named {name:?}")))?;
        Self::parse(text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("reading scenario {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.active_ues + self.idle_ues != self.total_ues {
            problems.push(format!(
                "active_ues + idle_ues = {} but total_ues = {}",
                self.active_ues + self.idle_ues,
                self.total_ues
            ));
        }
        for (name, v) in [
            ("mean_packet_size_mbit", self.mean_packet_size_mbit),
            ("mean_interarrival_ms", self.mean_interarrival_ms),
            ("step_duration_ms", self.step_duration_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        // zero speed is allowed as a static-UE degenerate case
        if !(self.mean_speed_mps.is_finite() && self.mean_speed_mps >= 0.0) {
            problems.push(format!("mean_speed_mps must be non-negative, got {}", self.mean_speed_mps));
        }
        if self.episode_length == 0 {
            problems.push("episode_length must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Label used in reports, e.g. `A` or `C-day2`.
    pub fn label(&self) -> String {
        match self.scenario_id {
            ScenarioId::C => format!("C-day{}", self.day),
            id => id.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_rows_match_table() {
        let rows = [
            ("A", 12, 28, 0.41),
            ("B", 10, 30, 1.03),
            ("C-day1", 7, 33, 0.89),
            ("C-day2", 18, 22, 1.18),
            ("C-day3", 19, 21, 1.11),
        ];
        for (name, active, idle, size) in rows {
            let s = TrafficScenario::builtin(name).unwrap();
            assert_eq!(s.total_ues, 40);
            assert_eq!((s.active_ues, s.idle_ues), (active, idle));
            assert_eq!(s.mean_packet_size_mbit, size);
            assert_eq!(s.mean_interarrival_ms, 200.0);
            assert_eq!(s.mean_speed_mps, 3.0);
            assert_eq!(s.label(), name);
        }
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let mut s = TrafficScenario::builtin("A").unwrap();
        s.idle_ues = 1;
        s.mean_interarrival_ms = 0.0;
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("total_ues") && msg.contains("mean_interarrival_ms"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{}\nfoo = 1\n", include_str!("../../../../scenarios/A.toml"));
        assert!(TrafficScenario::parse(&text).is_err());
    }
}
