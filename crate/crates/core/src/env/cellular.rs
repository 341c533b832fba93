use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{decode_action, ACTION_DIM};
use super::{EnvStep, JointObs, MultiAgentEnv, StepInfo};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::sim::{Balancing, LbParameters, LinkModel, NetworkState, NetworkTopology, SimParams, TrafficScenario};

/// Per-site observation: `[s_ue, s_band, s_tput]`.
pub const OBS_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellularEnvConfig {
    pub n_bs: usize,
    pub inter_site_distance_m: f64,
    pub link: LinkModel,
    pub sim: SimParams,
}

impl Default for CellularEnvConfig {
    fn default() -> Self {
        Self {
            n_bs: 7,
            inter_site_distance_m: 500.0,
            link: LinkModel::default(),
            sim: SimParams::default(),
        }
    }
}

/// The load-balancing Markov game: one agent per base station.
///
/// Observations per site are the fraction of all UEs it serves, the mean
/// bandwidth utilisation of its channels, and the mean throughput of its
/// active UEs divided by the link model's peak rate. Rewards are the
/// site-local metric combinations of the last step.
#[derive(Clone, Debug)]
pub struct CellularEnv {
    topology: NetworkTopology,
    scenario: TrafficScenario,
    sim: SimParams,
    state: Option<NetworkState>,
    rng: ChaCha8Rng,
    steps: usize,
    balancing_disabled: bool,
    reference_rate_mbps: f64,
}

impl CellularEnv {
    pub fn new(scenario: TrafficScenario, config: CellularEnvConfig) -> Result<Self> {
        scenario.validate()?;
        let mut topology = NetworkTopology::build(config.n_bs, config.inter_site_distance_m)?;
        topology.link = config.link;
        let widest = topology
            .carriers
            .iter()
            .map(|c| c.bandwidth_mhz)
            .fold(0.0, f64::max);
        let reference_rate_mbps = topology.link.peak_rate_mbps(widest);
        Ok(Self {
            topology,
            scenario,
            sim: config.sim,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            balancing_disabled: false,
            reference_rate_mbps,
        })
    }

    /// Switches both balancing mechanisms off: no AULB handoffs and uniform
    /// idle re-selection, whatever actions are passed to `step`.
    pub fn set_balancing_disabled(&mut self, disabled: bool) {
        self.balancing_disabled = disabled;
    }

    pub fn balancing_disabled(&self) -> bool {
        self.balancing_disabled
    }

    pub fn state(&self) -> Option<&NetworkState> {
        self.state.as_ref()
    }

    pub fn scenario(&self) -> &TrafficScenario {
        &self.scenario
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn reference_rate_mbps(&self) -> f64 {
        self.reference_rate_mbps
    }

    fn observe(&self, state: &NetworkState, report: Option<&MetricsReport>) -> JointObs {
        let total = state.ues.len().max(1) as f64;
        (0..state.n_bs())
            .map(|k| {
                let mut ues = 0usize;
                let mut util = 0.0;
                let mut n_ch = 0usize;
                for ch in state.topology.bs_channels(k) {
                    let c = state.channel(ch);
                    ues += c.load();
                    util += c.bandwidth_utilization;
                    n_ch += 1;
                }
                let tput = report.map_or(0.0, |r| r.per_bs[k].g_aver);
                vec![
                    ues as f64 / total,
                    (util / n_ch as f64).clamp(0.0, 1.0),
                    (tput / self.reference_rate_mbps).clamp(0.0, 1.0),
                ]
            })
            .collect()
    }
}

impl MultiAgentEnv for CellularEnv {
    fn n_agents(&self) -> usize {
        self.topology.n_bs()
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, seed: u64) -> Result<JointObs> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let state = NetworkState::new(
            self.topology.clone(),
            self.scenario.clone(),
            self.sim.clone(),
            &mut self.rng,
        )?;
        let obs = self.observe(&state, None);
        self.state = Some(state);
        self.steps = 0;
        Ok(obs)
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<EnvStep> {
        let n = self.n_agents();
        if actions.len() != n {
            return Err(Error::contract(format!("{} actions for {n} agents", actions.len())));
        }
        let balancing = if self.balancing_disabled {
            Balancing::Disabled
        } else {
            let knobs = actions.iter().map(|a| decode_action(a)).collect::<Result<Vec<_>>>()?;
            Balancing::Enabled(LbParameters::new(knobs))
        };
        let mut state = self
            .state
            .take()
            .ok_or_else(|| Error::contract("step called before reset"))?;
        let stepped = state.step_sim(&balancing, &mut self.rng).map(|c| c.clone());
        let counters = match stepped {
            Ok(c) => c,
            Err(e) => {
                self.state = Some(state);
                return Err(e);
            }
        };
        let report = MetricsReport::from_deliveries(&state.window_deliveries(), n, state.window_s())?;
        let obs = self.observe(&state, Some(&report));
        self.state = Some(state);
        self.steps += 1;
        Ok(EnvStep {
            obs,
            rewards: report.per_bs.iter().map(|m| m.reward).collect(),
            done: self.steps >= self.scenario.episode_length,
            info: StepInfo {
                metrics: Some(report),
                aulb_handoffs: counters.aulb_handoffs,
                mobility_handoffs: counters.mobility_handoffs,
                reselections: counters.reselections,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn env(n_bs: usize, scenario: &str) -> CellularEnv {
        let s = TrafficScenario::builtin(scenario).unwrap();
        CellularEnv::new(s, CellularEnvConfig { n_bs, ..Default::default() }).unwrap()
    }

    #[test]
    fn reset_places_scenario_population() {
        let mut e = env(7, "A");
        let obs = e.reset(42).unwrap();
        assert_eq!(obs.len(), 7);
        let st = e.state().unwrap();
        assert_eq!(st.ues.len(), 40);
        assert_eq!(st.ues.iter().filter(|u| u.is_active()).count(), 12);
        assert_eq!(st.ues.iter().filter(|u| !u.is_active()).count(), 28);
        assert_eq!(obs, e.clone().reset(42).unwrap());
    }

    #[test]
    fn step_before_reset_and_bad_arity_fail() {
        let mut e = env(3, "A");
        assert!(e.step(&vec![vec![0.0; ACTION_DIM]; 3]).is_err());
        e.reset(1).unwrap();
        assert!(matches!(e.step(&vec![vec![0.0; ACTION_DIM]; 2]), Err(Error::Contract(_))));
        assert!(e.step(&vec![vec![0.0; 5]; 3]).is_err());
        // the failed calls did not consume the episode
        assert!(e.step(&vec![vec![0.0; ACTION_DIM]; 3]).is_ok());
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut e = env(3, "B");
        e.reset(3).unwrap();
        let a = vec![vec![0.0; ACTION_DIM]; 3];
        for t in 1..=40 {
            let s = e.step(&a).unwrap();
            assert_eq!(s.done, t == 40);
        }
    }

    #[test]
    fn empty_network_rewards_zero() {
        let mut s = TrafficScenario::builtin("A").unwrap();
        s.total_ues = 0;
        s.active_ues = 0;
        s.idle_ues = 0;
        let mut e = CellularEnv::new(s, CellularEnvConfig { n_bs: 3, ..Default::default() }).unwrap();
        e.reset(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..ACTION_DIM).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect();
            let s = e.step(&a).unwrap();
            assert_eq!(s.rewards, vec![0.0; 3]);
        }
    }

    #[test]
    fn rewards_are_partition_of_ledgers() {
        let mut e = env(3, "C-day2");
        e.reset(9).unwrap();
        let a = vec![vec![0.3; ACTION_DIM]; 3];
        for _ in 0..20 {
            let s = e.step(&a).unwrap();
            // recompute each site's reward straight from the channel ledgers
            let st = e.state().unwrap();
            let mut total = 0.0;
            for k in 0..3 {
                let mut tput = Vec::new();
                for ch in st.topology.bs_channels(k) {
                    for (&ue, &bits) in &st.channel(ch).delivered_ledger {
                        assert!(st.ues[ue].is_active());
                        tput.push(bits as f64 / 1e6 / st.window_s());
                    }
                }
                if tput.is_empty() {
                    continue;
                }
                let n = tput.len() as f64;
                let mean = tput.iter().sum::<f64>() / n;
                let min = tput.iter().copied().fold(f64::INFINITY, f64::min);
                let sd = (tput.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                total += mean + min - sd;
            }
            let got: f64 = s.rewards.iter().sum();
            assert!((got - total).abs() <= 1e-9 * (1.0 + total.abs()), "{got} vs {total}");
        }
    }

    #[test]
    fn balancing_disabled_ignores_actions() {
        let mut a = env(3, "A");
        let mut b = env(3, "A");
        a.set_balancing_disabled(true);
        b.set_balancing_disabled(true);
        a.reset(4).unwrap();
        b.reset(4).unwrap();
        for _ in 0..10 {
            let sa = a.step(&vec![vec![1.0; ACTION_DIM]; 3]).unwrap();
            let sb = b.step(&vec![vec![-1.0; ACTION_DIM]; 3]).unwrap();
            assert_eq!(sa, sb);
            assert_eq!(sa.info.aulb_handoffs, 0);
        }
    }
}
