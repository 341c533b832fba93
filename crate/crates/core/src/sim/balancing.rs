//! Control knobs of the two balancing mechanisms and their mappings.
//!
//! Active-UE balancing (AULB) hands an active UE to the least-loaded
//! admissible neighbour channel when the serving load exceeds it by more
//! than `base_margin * 10^(-alpha / 10)` UEs. Idle-UE balancing (IULB)
//! re-samples each idle UE's camping carrier from
//! `softmax(base_priority + (beta + gamma) / 10)` over the four carriers of
//! its sector.

use serde::{Deserialize, Serialize};

use super::topology::CARRIERS_PER_SECTOR;
use crate::error::{Error, Result};

pub const ALPHA_RANGE_DB: (f64, f64) = (-2.0, 2.0);
pub const BETA_RANGE_DB: (f64, f64) = (-20.0, 20.0);
pub const GAMMA_RANGE_DB: (f64, f64) = (-20.0, 20.0);

/// Knob vectors, one entry per carrier.
pub type CarrierVector = [f64; CARRIERS_PER_SECTOR];

/// Balancing offsets of one base station, in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsKnobs {
    alpha: CarrierVector,
    beta: CarrierVector,
    gamma: CarrierVector,
}

fn check(name: &str, v: &CarrierVector, (lo, hi): (f64, f64)) -> Result<()> {
    for (c, x) in v.iter().enumerate() {
        if !(lo..=hi).contains(x) {
            return Err(Error::contract(format!(
                "{name}[{c}] = {x} dB outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

impl BsKnobs {
    pub fn new(alpha: CarrierVector, beta: CarrierVector, gamma: CarrierVector) -> Result<Self> {
        check("alpha", &alpha, ALPHA_RANGE_DB)?;
        check("beta", &beta, BETA_RANGE_DB)?;
        check("gamma", &gamma, GAMMA_RANGE_DB)?;
        Ok(Self { alpha, beta, gamma })
    }

    pub fn neutral() -> Self {
        Self {
            alpha: [0.0; CARRIERS_PER_SECTOR],
            beta: [0.0; CARRIERS_PER_SECTOR],
            gamma: [0.0; CARRIERS_PER_SECTOR],
        }
    }

    pub fn alpha(&self) -> &CarrierVector {
        &self.alpha
    }

    pub fn beta(&self) -> &CarrierVector {
        &self.beta
    }

    pub fn gamma(&self) -> &CarrierVector {
        &self.gamma
    }
}

/// Offsets for every base station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbParameters {
    per_bs: Vec<BsKnobs>,
}

impl LbParameters {
    pub fn new(per_bs: Vec<BsKnobs>) -> Self {
        Self { per_bs }
    }

    pub fn neutral(n_bs: usize) -> Self {
        Self::new(vec![BsKnobs::neutral(); n_bs])
    }

    pub fn n_bs(&self) -> usize {
        self.per_bs.len()
    }

    pub fn bs(&self, k: usize) -> &BsKnobs {
        &self.per_bs[k]
    }
}

/// How the simulator balances load during a step.
#[derive(Clone, Debug, PartialEq)]
pub enum Balancing {
    /// Both mechanisms run with the given offsets.
    Enabled(LbParameters),
    /// No AULB handoffs; idle UEs re-select uniformly.
    Disabled,
}

/// AULB trigger margin in UEs for a serving carrier offset `alpha_db`.
/// Larger alpha eases triggering.
pub fn aulb_margin(base_margin: f64, alpha_db: f64) -> f64 {
    base_margin * 10f64.powf(-alpha_db / 10.0)
}

/// IULB re-selection ratios over the four carriers of a sector.
pub fn reselection_ratios(knobs: &BsKnobs, base_priority: &CarrierVector) -> CarrierVector {
    let mut logits = [0.0; CARRIERS_PER_SECTOR];
    for c in 0..CARRIERS_PER_SECTOR {
        logits[c] = base_priority[c] + (knobs.beta[c] + knobs.gamma[c]) / 10.0;
    }
    softmax4(&logits)
}

pub(crate) fn softmax4(logits: &CarrierVector) -> CarrierVector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; CARRIERS_PER_SECTOR];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn out_of_range_knobs_rejected() {
        let z = [0.0; 4];
        assert!(BsKnobs::new([2.0, -2.0, 0.0, 0.0], z, z).is_ok());
        assert!(BsKnobs::new([2.1, 0.0, 0.0, 0.0], z, z).is_err());
        assert!(BsKnobs::new(z, [0.0, 0.0, 0.0, -20.5], z).is_err());
        assert!(BsKnobs::new(z, z, [f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn neutral_offsets_give_uniform_ratios() {
        let r = reselection_ratios(&BsKnobs::neutral(), &[0.0; 4]);
        assert_eq!(r, [0.25; 4]);
    }

    #[test]
    fn one_dominant_carrier() {
        let k = BsKnobs::new([0.0; 4], [20.0, -20.0, -20.0, -20.0], [20.0, -20.0, -20.0, -20.0]).unwrap();
        let r = reselection_ratios(&k, &[0.0; 4]);
        // e^8 / (e^8 + 3)
        let expected = 8f64.exp() / (8f64.exp() + 3.0);
        assert!((r[0] - expected).abs() < 1e-12);
        assert!(r[0] > 0.99);
    }

    #[test]
    fn margin_mapping() {
        assert_eq!(aulb_margin(2.0, 0.0), 2.0);
        assert!((aulb_margin(2.0, 10.0) - 0.2).abs() < 1e-15);
        assert!(aulb_margin(2.0, 2.0) < aulb_margin(2.0, -2.0));
    }

    proptest! {
        #[test]
        fn ratios_normalised(b in prop::array::uniform4(-20.0f64..=20.0), g in prop::array::uniform4(-20.0f64..=20.0)) {
            let k = BsKnobs::new([0.0; 4], b, g).unwrap();
            let r = reselection_ratios(&k, &[0.0; 4]);
            let s: f64 = r.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn raising_an_offset_raises_its_ratio(b in prop::array::uniform4(-20.0f64..=19.0), c in 0usize..4) {
            let k = BsKnobs::new([0.0; 4], b, [0.0; 4]).unwrap();
            let mut b2 = b;
            b2[c] += 1.0;
            let k2 = BsKnobs::new([0.0; 4], b2, [0.0; 4]).unwrap();
            let before = reselection_ratios(&k, &[0.0; 4])[c];
            let after = reselection_ratios(&k2, &[0.0; 4])[c];
            prop_assert!(after > before);
        }
    }
}
