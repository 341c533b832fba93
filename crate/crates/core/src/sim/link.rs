//! Physical-layer abstraction: log-distance attenuation feeding a Shannon
//! style capacity curve, shared equally among a channel's active UEs.
//!
//! ```text
//! gain(d)     = 10^((snr_ref_db - 10 n log10(max(d, d_min) / d_ref)) / 10)
//! sinr        = min(10^(max_snr_db / 10), gain(d) / (1 + scale * I))
//! capacity    = B_MHz * log2(1 + sinr)                     [Mbit/s]
//! rate        = capacity / active UEs on the channel
//! ```
//!
//! `I` is co-channel interference in units of the noise power: the sum of
//! `gain` from other sites on the same carrier, each weighted by how busy
//! the interfering channel is.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// SNR at the reference distance, dB.
    pub snr_ref_db: f64,
    pub ref_distance_m: f64,
    pub pathloss_exponent: f64,
    /// Distances below this are clamped.
    pub min_distance_m: f64,
    pub max_snr_db: f64,
    /// Multiplier on co-channel interference; 0 gives an interference-free
    /// network.
    pub interference_scale: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            snr_ref_db: 10.0,
            ref_distance_m: 100.0,
            pathloss_exponent: 3.5,
            min_distance_m: 10.0,
            max_snr_db: 30.0,
            interference_scale: 1.0,
        }
    }
}

impl LinkModel {
    pub fn snr_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        let snr = self.snr_ref_db - 10.0 * self.pathloss_exponent * (d / self.ref_distance_m).log10();
        snr.min(self.max_snr_db)
    }

    /// Received power at `distance_m` relative to the noise floor, uncapped.
    pub fn gain(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        let db = self.snr_ref_db - 10.0 * self.pathloss_exponent * (d / self.ref_distance_m).log10();
        10f64.powf(db / 10.0)
    }

    /// Single-user capacity in Mbit/s of a carrier of `bandwidth_mhz` without
    /// interference.
    pub fn capacity_mbps(&self, distance_m: f64, bandwidth_mhz: f64) -> f64 {
        self.capacity_with_interference_mbps(distance_m, 0.0, bandwidth_mhz)
    }

    /// Single-user capacity under `interference` (linear, noise units).
    pub fn capacity_with_interference_mbps(&self, distance_m: f64, interference: f64, bandwidth_mhz: f64) -> f64 {
        let cap = 10f64.powf(self.max_snr_db / 10.0);
        let sinr = (self.gain(distance_m) / (1.0 + self.interference_scale * interference)).min(cap);
        bandwidth_mhz * (1.0 + sinr).log2()
    }

    /// Per-UE rate when `active_sharing` UEs share the channel equally.
    pub fn shared_rate_mbps(&self, distance_m: f64, bandwidth_mhz: f64, active_sharing: usize) -> f64 {
        self.capacity_mbps(distance_m, bandwidth_mhz) / active_sharing.max(1) as f64
    }

    /// Best case single-user rate: a UE next to the site on the widest carrier.
    pub fn peak_rate_mbps(&self, widest_bandwidth_mhz: f64) -> f64 {
        widest_bandwidth_mhz * (1.0 + 10f64.powf(self.max_snr_db / 10.0)).log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point_golden() {
        // 10 dB at 100 m on 10 MHz: 10 * log2(11)
        let m = LinkModel::default();
        assert!((m.capacity_mbps(100.0, 10.0) - 34.59431618637297).abs() < 1e-12);
        assert!((m.capacity_mbps(100.0, 1.4) - 4.843204266092216).abs() < 1e-12);
        // 200 m: 10 - 35 log10(2) dB
        assert!((m.capacity_mbps(200.0, 10.0) - 9.13709732945004).abs() < 1e-12);
        assert!((m.peak_rate_mbps(10.0) - 99.67226258835993).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_distance_and_sharing() {
        let m = LinkModel::default();
        let mut prev = f64::INFINITY;
        for d in (0..100).map(|k| 1.0 + 10.0 * k as f64) {
            let r = m.capacity_mbps(d, 5.0);
            assert!(r <= prev);
            prev = r;
        }
        assert!(m.shared_rate_mbps(150.0, 5.0, 2) < m.shared_rate_mbps(150.0, 5.0, 1));
        assert_eq!(m.shared_rate_mbps(150.0, 5.0, 2) * 2.0, m.capacity_mbps(150.0, 5.0));
    }

    #[test]
    fn interference_lowers_capacity() {
        let m = LinkModel::default();
        // 10 dB signal against interference equal to the noise: 10 / 2 = 5
        assert!((m.capacity_with_interference_mbps(100.0, 1.0, 10.0) - 10.0 * 6f64.log2()).abs() < 1e-12);
        assert!(m.capacity_with_interference_mbps(100.0, 3.0, 10.0) < m.capacity_with_interference_mbps(100.0, 1.0, 10.0));
        let off = LinkModel { interference_scale: 0.0, ..m };
        assert_eq!(off.capacity_with_interference_mbps(100.0, 50.0, 10.0), off.capacity_mbps(100.0, 10.0));
        assert!((m.gain(100.0) - 10.0).abs() < 1e-12);
    }
}
