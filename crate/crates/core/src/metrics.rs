//! System metrics over per-UE delivered traffic in a measurement window.
//!
//! With `A_u` the megabits delivered to UE `u` during a window of `T`
//! seconds and `x_u = A_u / T`:
//!
//! ```text
//! g_aver = mean(x_u)
//! g_min  = min(x_u)
//! g_sd   = sqrt(mean((x_u - g_aver)^2))     (population deviation)
//! reward = g_aver + g_min - g_sd
//! ```
//!
//! No normalisation is applied; the three terms share a unit (Mbit/s).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_window(window_s: f64) -> Result<()> {
    if window_s.is_finite() && window_s > 0.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("measurement window must be positive, got {window_s}")))
    }
}

pub fn compute_g_aver(delivered_mbit: &[f64], window_s: f64) -> Result<f64> {
    check_window(window_s)?;
    if delivered_mbit.is_empty() {
        return Err(Error::UndefinedMetric("average throughput over zero UEs"));
    }
    let total: f64 = delivered_mbit.iter().map(|a| a / window_s).sum();
    Ok(total / delivered_mbit.len() as f64)
}

pub fn compute_g_min(delivered_mbit: &[f64], window_s: f64) -> Result<f64> {
    check_window(window_s)?;
    delivered_mbit
        .iter()
        .map(|a| a / window_s)
        .reduce(f64::min)
        .ok_or(Error::UndefinedMetric("minimum throughput over zero UEs"))
}

pub fn compute_g_sd(delivered_mbit: &[f64], window_s: f64) -> Result<f64> {
    let mean = compute_g_aver(delivered_mbit, window_s)?;
    let ss: f64 = delivered_mbit
        .iter()
        .map(|a| {
            let d = a / window_s - mean;
            d * d
        })
        .sum();
    Ok((ss / delivered_mbit.len() as f64).sqrt())
}

pub fn compute_reward(g_aver: f64, g_min: f64, g_sd: f64) -> f64 {
    g_aver + g_min - g_sd
}

/// The three metrics and the reward over one set of UEs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub g_aver: f64,
    pub g_min: f64,
    pub g_sd: f64,
    pub reward: f64,
    pub n_ues: usize,
}

impl MetricSet {
    pub fn compute(delivered_mbit: &[f64], window_s: f64) -> Result<Self> {
        let g_aver = compute_g_aver(delivered_mbit, window_s)?;
        let g_min = compute_g_min(delivered_mbit, window_s)?;
        let g_sd = compute_g_sd(delivered_mbit, window_s)?;
        Ok(Self {
            g_aver,
            g_min,
            g_sd,
            reward: compute_reward(g_aver, g_min, g_sd),
            n_ues: delivered_mbit.len(),
        })
    }

    /// Like [`MetricSet::compute`] but an empty UE set yields all zeros.
    pub fn compute_or_zero(delivered_mbit: &[f64], window_s: f64) -> Result<Self> {
        if delivered_mbit.is_empty() {
            check_window(window_s)?;
            Ok(Self::default())
        } else {
            Self::compute(delivered_mbit, window_s)
        }
    }
}

/// Network-wide metrics plus the same quantities per base station.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub network: MetricSet,
    pub per_bs: Vec<MetricSet>,
}

impl MetricsReport {
    /// `deliveries` holds `(serving site, delivered Mbit)` per UE. Sites
    /// without UEs, and an empty network, report zeros.
    pub fn from_deliveries(deliveries: &[(usize, f64)], n_bs: usize, window_s: f64) -> Result<Self> {
        let all: Vec<f64> = deliveries.iter().map(|&(_, a)| a).collect();
        let network = MetricSet::compute_or_zero(&all, window_s)?;
        let mut per_bs = Vec::with_capacity(n_bs);
        let mut bucket = Vec::new();
        for k in 0..n_bs {
            bucket.clear();
            bucket.extend(deliveries.iter().filter(|&&(b, _)| b == k).map(|&(_, a)| a));
            per_bs.push(MetricSet::compute_or_zero(&bucket, window_s)?);
        }
        Ok(Self { network, per_bs })
    }

    /// Sum of per-site rewards, the cooperative objective.
    pub fn total_bs_reward(&self) -> f64 {
        self.per_bs.iter().map(|m| m.reward).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_worked_examples() {
        let a = [8.0, 4.0];
        assert_eq!(compute_g_aver(&a, 2.0).unwrap(), 3.0);
        assert_eq!(compute_g_min(&a, 2.0).unwrap(), 2.0);
        assert_eq!(compute_g_sd(&[4.0, 2.0], 1.0).unwrap(), 1.0);
        assert_eq!(compute_g_aver(&[5.0], 1.0).unwrap(), 5.0);
        assert_eq!(compute_g_sd(&[5.0], 1.0).unwrap(), 0.0);
        assert_eq!(compute_g_aver(&[0.0; 4], 1.0).unwrap(), 0.0);
        assert_eq!(compute_reward(3.0, 2.0, 0.0), 5.0);
        assert_eq!(compute_reward(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn equal_ues_collapse() {
        let a = [2.5; 7];
        assert_eq!(compute_g_min(&a, 1.0).unwrap(), compute_g_aver(&a, 1.0).unwrap());
        assert_eq!(compute_g_sd(&a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_are_errors() {
        assert!(matches!(compute_g_aver(&[], 1.0), Err(Error::UndefinedMetric(_))));
        assert!(matches!(compute_g_min(&[], 1.0), Err(Error::UndefinedMetric(_))));
        assert!(matches!(compute_g_sd(&[], 1.0), Err(Error::UndefinedMetric(_))));
        assert!(compute_g_aver(&[1.0], 0.0).is_err());
    }

    #[test]
    fn per_bs_partition_sums() {
        let d = [(0, 4.0), (0, 2.0), (1, 3.0), (2, 1.0), (2, 5.0)];
        let r = MetricsReport::from_deliveries(&d, 4, 1.0).unwrap();
        // site 0: mean 3, min 2, sd 1 -> 4; site 1: 3+3-0 = 6; site 2: 3+1-2 = 2; site 3 empty
        let rewards: Vec<f64> = r.per_bs.iter().map(|m| m.reward).collect();
        assert_eq!(rewards, vec![4.0, 6.0, 2.0, 0.0]);
        assert_eq!(r.total_bs_reward(), 12.0);
        assert_eq!(r.network.n_ues, 5);
    }

    proptest! {
        #[test]
        fn order_and_identity(a in prop::collection::vec(0.0f64..50.0, 1..100), t in 0.1f64..10.0) {
            let m = MetricSet::compute(&a, t).unwrap();
            prop_assert!(m.g_min <= m.g_aver + 1e-12);
            prop_assert!(m.g_sd >= 0.0);
            prop_assert_eq!(m.reward, m.g_aver + m.g_min - m.g_sd);
        }

        #[test]
        fn scaling(a in prop::collection::vec(0.0f64..50.0, 1..60), c in 0.1f64..10.0) {
            let m = MetricSet::compute(&a, 1.0).unwrap();
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let s = MetricSet::compute(&scaled, 1.0).unwrap();
            prop_assert!((s.g_aver - c * m.g_aver).abs() <= 1e-9 * (1.0 + s.g_aver.abs()));
            prop_assert!((s.g_min - c * m.g_min).abs() <= 1e-9 * (1.0 + s.g_min.abs()));
            prop_assert!((s.g_sd - c * m.g_sd).abs() <= 1e-9 * (1.0 + s.g_sd.abs()));
        }

        #[test]
        fn sd_shift_invariant(a in prop::collection::vec(0.0f64..50.0, 1..60), k in 0.0f64..20.0) {
            let shifted: Vec<f64> = a.iter().map(|x| x + k).collect();
            let s0 = compute_g_sd(&a, 1.0).unwrap();
            let s1 = compute_g_sd(&shifted, 1.0).unwrap();
            prop_assert!((s0 - s1).abs() <= 1e-9 * (1.0 + s0));
        }
    }
}
