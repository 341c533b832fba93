use crate::error::{Error, Result};
use crate::sim::balancing::{BsKnobs, CarrierVector, ALPHA_RANGE_DB, BETA_RANGE_DB, GAMMA_RANGE_DB};
use crate::sim::topology::CARRIERS_PER_SECTOR;

/// Raw action width per base station: 4 AULB offsets, then 4 beta, then 4 gamma.
pub const ACTION_DIM: usize = 3 * CARRIERS_PER_SECTOR;

fn to_db(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let mid = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    mid + x * half
}

fn from_db(v: f64, (lo, hi): (f64, f64)) -> f64 {
    let mid = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    (v - mid) / half
}

/// Maps a raw action in `[-1, 1]^12` affinely onto the knob ranges.
/// Out-of-range components are clamped with a warning.
pub fn decode_action(raw: &[f64]) -> Result<BsKnobs> {
    if raw.len() != ACTION_DIM {
        return Err(Error::contract(format!(
            "raw action has {} components, expected {ACTION_DIM}",
            raw.len()
        )));
    }
    if let Some(bad) = raw.iter().find(|x| x.is_nan()) {
        return Err(Error::contract(format!("raw action component is {bad}")));
    }
    let mut clamped = [0.0; ACTION_DIM];
    for (c, &x) in clamped.iter_mut().zip(raw) {
        if !(-1.0..=1.0).contains(&x) {
            log::warn!("raw action component {x} clamped to [-1, 1]");
        }
        *c = x.clamp(-1.0, 1.0);
    }
    let block = |offset: usize, range| -> CarrierVector {
        std::array::from_fn(|i| to_db(clamped[offset + i], range))
    };
    BsKnobs::new(
        block(0, ALPHA_RANGE_DB),
        block(CARRIERS_PER_SECTOR, BETA_RANGE_DB),
        block(2 * CARRIERS_PER_SECTOR, GAMMA_RANGE_DB),
    )
}

/// Inverse of [`decode_action`].
pub fn encode_knobs(knobs: &BsKnobs) -> Vec<f64> {
    let mut out = Vec::with_capacity(ACTION_DIM);
    out.extend(knobs.alpha().iter().map(|&v| from_db(v, ALPHA_RANGE_DB)));
    out.extend(knobs.beta().iter().map(|&v| from_db(v, BETA_RANGE_DB)));
    out.extend(knobs.gamma().iter().map(|&v| from_db(v, GAMMA_RANGE_DB)));
    out
}
