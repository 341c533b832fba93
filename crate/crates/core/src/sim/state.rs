//! Simulator state and the per-step transition.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::balancing::{aulb_margin, reselection_ratios, Balancing, CarrierVector};
use super::scenario::TrafficScenario;
use super::topology::{ChannelId, NetworkTopology, Point, SectorId, CARRIERS_PER_SECTOR};
use crate::error::{Error, Result};

const BITS_PER_MBIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeMode {
    Active,
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub position: Point,
    /// Velocity of the most recent move, m/s.
    pub velocity: (f64, f64),
    pub mode: UeMode,
    pub serving_channel: ChannelId,
    /// Sector that geometrically covers the UE; tracked to detect mobility handovers.
    pub home_sector: SectorId,
    pub pending_bits: u64,
    pub generated_bits: u64,
    pub delivered_bits: u64,
    next_arrival_ms: f64,
}

impl UserEquipment {
    pub fn is_active(&self) -> bool {
        self.mode == UeMode::Active
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub id: ChannelId,
    pub attached_ues: BTreeSet<usize>,
    /// Busy transmission time over the last step divided by its duration.
    pub bandwidth_utilization: f64,
    /// Bits delivered to each UE during the current measurement window.
    pub delivered_ledger: BTreeMap<usize, u64>,
}

impl ChannelState {
    pub fn load(&self) -> usize {
        self.attached_ues.len()
    }
}

/// Knobs of the simulator that are not part of a traffic scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// AULB trigger margin at 0 dB, in UEs.
    pub aulb_base_margin: f64,
    /// A neighbour site is admissible for AULB when it is at most this many
    /// times farther than the nearest site.
    pub neighbour_range_factor: f64,
    /// Mean duration of an activity period; sets the active/idle flip rates.
    pub mean_active_session_s: f64,
    /// IULB logits before offsets are added.
    pub base_priority: CarrierVector,
    /// Packet sizes above `max_packet_factor * mean` are redrawn.
    pub max_packet_factor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            aulb_base_margin: 2.0,
            neighbour_range_factor: 1.5,
            mean_active_session_s: 10.0,
            base_priority: [0.0; CARRIERS_PER_SECTOR],
            max_packet_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats {
    pub packets: u64,
    pub generated_bits: u64,
    /// Every gap drawn by the arrival process, including the pending one a
    /// UE drops when its session ends.
    pub interarrival_sum_ms: f64,
    pub interarrival_count: u64,
}

impl TrafficStats {
    fn record_gap(&mut self, gap_ms: f64) {
        self.interarrival_sum_ms += gap_ms;
        self.interarrival_count += 1;
    }

    pub fn mean_interarrival_ms(&self) -> f64 {
        self.interarrival_sum_ms / self.interarrival_count as f64
    }

    pub fn mean_packet_mbit(&self) -> f64 {
        self.generated_bits as f64 / BITS_PER_MBIT / self.packets as f64
    }
}

/// What happened during one call to [`NetworkState::step_sim`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepCounters {
    pub aulb_handoffs: usize,
    pub mobility_handoffs: usize,
    pub reselections: usize,
    pub activations: usize,
    pub deactivations: usize,
    pub distance_moved_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub topology: NetworkTopology,
    pub scenario: TrafficScenario,
    pub params: SimParams,
    pub ues: Vec<UserEquipment>,
    pub channels: Vec<ChannelState>,
    pub time_ms: f64,
    pub stats: TrafficStats,
    pub last_step: StepCounters,
}

/// Co-channel interference (noise units) at `position` for a UE served by
/// `serving`: every other site's sector facing the position contributes its
/// gain on the same carrier, weighted by that channel's utilisation.
pub fn co_channel_interference(
    serving: ChannelId,
    position: Point,
    channels: &[ChannelState],
    topology: &NetworkTopology,
) -> f64 {
    (0..topology.n_bs())
        .filter(|&j| j != serving.bs())
        .map(|j| {
            let ch = topology.sector_towards(j, position).channel(serving.carrier());
            let busy = channels[ch.0].bandwidth_utilization;
            if busy > 0.0 {
                busy * topology.link.gain(topology.distance_to_bs(j, position))
            } else {
                0.0
            }
        })
        .sum()
}

/// Per-UE link rate in Mbit/s on `channel`: capacity at the UE's distance
/// from the channel's site under the current co-channel interference, split
/// equally among the channel's active UEs.
pub fn compute_link_rate(
    ue: &UserEquipment,
    channel: &ChannelState,
    channels: &[ChannelState],
    ues: &[UserEquipment],
    topology: &NetworkTopology,
) -> f64 {
    let sharing = channel
        .attached_ues
        .iter()
        .filter(|&&u| ues[u].is_active())
        .count();
    let d = topology.distance_to_bs(channel.id.bs(), ue.position);
    let bw = topology.carriers[channel.id.carrier()].bandwidth_mhz;
    let interference = co_channel_interference(channel.id, ue.position, channels, topology);
    topology.link.capacity_with_interference_mbps(d, interference, bw) / sharing.max(1) as f64
}

fn uniform_point<R: Rng + ?Sized>(topology: &NetworkTopology, rng: &mut R) -> Point {
    let e = topology.extent;
    let x = rng.random::<f64>() * e.width - e.width / 2.0;
    let y = rng.random::<f64>() * e.height - e.height / 2.0;
    e.wrap(Point::new(x, y))
}

impl NetworkState {
    /// Places the scenario's UEs uniformly at random. The first
    /// `active_ues` ids start active; every UE camps on a uniformly chosen
    /// carrier of its home sector.
    pub fn new<R: Rng + ?Sized>(
        topology: NetworkTopology,
        scenario: TrafficScenario,
        params: SimParams,
        rng: &mut R,
    ) -> Result<Self> {
        scenario.validate()?;
        let channels = topology
            .channels()
            .map(|id| ChannelState {
                id,
                attached_ues: BTreeSet::new(),
                bandwidth_utilization: 0.0,
                delivered_ledger: BTreeMap::new(),
            })
            .collect();
        let mut state = Self {
            topology,
            scenario,
            params,
            ues: Vec::new(),
            channels,
            time_ms: 0.0,
            stats: TrafficStats::default(),
            last_step: StepCounters::default(),
        };
        for id in 0..state.scenario.total_ues {
            let position = uniform_point(&state.topology, rng);
            let home_sector = state.topology.home_sector(position);
            let carrier = rng.random_range(0..CARRIERS_PER_SECTOR);
            let mode = if id < state.scenario.active_ues { UeMode::Active } else { UeMode::Idle };
            let serving_channel = home_sector.channel(carrier);
            state.ues.push(UserEquipment {
                id,
                position,
                velocity: (0.0, 0.0),
                mode,
                serving_channel,
                home_sector,
                pending_bits: 0,
                generated_bits: 0,
                delivered_bits: 0,
                next_arrival_ms: f64::INFINITY,
            });
            state.channels[serving_channel.0].attached_ues.insert(id);
            if mode == UeMode::Active {
                state.schedule_first_arrival(id, rng);
            }
        }
        Ok(state)
    }

    fn interarrival(&self) -> Exp<f64> {
        Exp::new(1.0 / self.scenario.mean_interarrival_ms).expect("validated positive mean")
    }

    fn schedule_first_arrival<R: Rng + ?Sized>(&mut self, ue: usize, rng: &mut R) {
        let gap = self.interarrival().sample(rng);
        self.stats.record_gap(gap);
        self.ues[ue].next_arrival_ms = self.time_ms + gap;
    }

    pub fn n_bs(&self) -> usize {
        self.topology.n_bs()
    }

    pub fn channel(&self, id: ChannelId) -> &ChannelState {
        &self.channels[id.0]
    }

    pub fn link_rate_mbps(&self, ue: usize) -> f64 {
        let u = &self.ues[ue];
        compute_link_rate(u, self.channel(u.serving_channel), &self.channels, &self.ues, &self.topology)
    }

    /// Number of active UEs attached to `id`.
    pub fn active_load(&self, id: ChannelId) -> usize {
        self.channels[id.0]
            .attached_ues
            .iter()
            .filter(|&&u| self.ues[u].is_active())
            .count()
    }

    fn handoff(&mut self, ue: usize, to: ChannelId) {
        let from = self.ues[ue].serving_channel;
        if from == to {
            return;
        }
        self.channels[from.0].attached_ues.remove(&ue);
        self.channels[to.0].attached_ues.insert(ue);
        self.ues[ue].serving_channel = to;
    }

    /// Flips UE modes with per-step probabilities whose stationary split
    /// matches the scenario's active/idle counts.
    pub fn transition_modes<R: Rng + ?Sized>(&mut self, dt_ms: f64, rng: &mut R) {
        let s = &self.scenario;
        let (p_deactivate, p_activate) = if s.active_ues == 0 || s.idle_ues == 0 {
            (0.0, 0.0)
        } else {
            let p = (dt_ms / 1000.0 / self.params.mean_active_session_s).min(1.0);
            (p, (p * s.active_ues as f64 / s.idle_ues as f64).min(1.0))
        };
        for id in 0..self.ues.len() {
            let draw: f64 = rng.random();
            match self.ues[id].mode {
                UeMode::Active if draw < p_deactivate => {
                    self.ues[id].mode = UeMode::Idle;
                    self.ues[id].next_arrival_ms = f64::INFINITY;
                    self.last_step.deactivations += 1;
                }
                UeMode::Idle if draw < p_activate => {
                    self.ues[id].mode = UeMode::Active;
                    self.schedule_first_arrival(id, rng);
                    self.last_step.activations += 1;
                }
                _ => {}
            }
        }
    }

    /// Random walk: each UE draws a heading uniformly and a speed uniformly
    /// in `[0, 2 v]`, so the long-run mean speed is the scenario's `v`.
    /// A UE whose home sector changes is handed to the same carrier there.
    pub fn move_ues<R: Rng + ?Sized>(&mut self, dt_ms: f64, rng: &mut R) {
        let dt_s = dt_ms / 1000.0;
        let v = self.scenario.mean_speed_mps;
        for id in 0..self.ues.len() {
            let heading = rng.random::<f64>() * std::f64::consts::TAU;
            let speed = rng.random::<f64>() * 2.0 * v;
            let (vx, vy) = (speed * heading.cos(), speed * heading.sin());
            let u = &mut self.ues[id];
            u.velocity = (vx, vy);
            u.position = self
                .topology
                .extent
                .wrap(Point::new(u.position.x + vx * dt_s, u.position.y + vy * dt_s));
            self.last_step.distance_moved_m += speed * dt_s;

            let home = self.topology.home_sector(self.ues[id].position);
            if home != self.ues[id].home_sector {
                self.ues[id].home_sector = home;
                let carrier = self.ues[id].serving_channel.carrier();
                let target = home.channel(carrier);
                if target != self.ues[id].serving_channel {
                    self.handoff(id, target);
                    self.last_step.mobility_handoffs += 1;
                }
            }
        }
    }

    /// Idle-mode re-selection within each idle UE's home sector.
    pub fn apply_iulb<R: Rng + ?Sized>(&mut self, balancing: &Balancing, rng: &mut R) {
        for id in 0..self.ues.len() {
            if self.ues[id].is_active() {
                continue;
            }
            let home = self.ues[id].home_sector;
            let ratios = match balancing {
                Balancing::Enabled(p) => reselection_ratios(p.bs(home.bs()), &self.params.base_priority),
                Balancing::Disabled => [1.0 / CARRIERS_PER_SECTOR as f64; CARRIERS_PER_SECTOR],
            };
            let carrier = sample_categorical(&ratios, rng);
            let target = home.channel(carrier);
            if target != self.ues[id].serving_channel {
                self.handoff(id, target);
                self.last_step.reselections += 1;
            }
        }
    }

    /// Threshold-triggered handoff of active UEs, processed in id order with
    /// active loads updated after each move.
    pub fn apply_aulb(&mut self, balancing: &Balancing) {
        let Balancing::Enabled(params) = balancing else {
            return;
        };
        let mut candidates = Vec::new();
        for id in 0..self.ues.len() {
            if !self.ues[id].is_active() {
                continue;
            }
            let serving = self.ues[id].serving_channel;
            candidates.clear();
            for sector in self
                .topology
                .candidate_sectors(self.ues[id].position, self.params.neighbour_range_factor)
            {
                candidates.extend(sector.channels().filter(|&c| c != serving));
            }
            let Some(best) = candidates
                .iter()
                .copied()
                .min_by_key(|c| (self.active_load(*c), c.0))
            else {
                continue;
            };
            let alpha = params.bs(serving.bs()).alpha()[serving.carrier()];
            let margin = aulb_margin(self.params.aulb_base_margin, alpha);
            let excess = self.active_load(serving) as f64 - self.active_load(best) as f64;
            if excess > margin {
                self.handoff(id, best);
                self.last_step.aulb_handoffs += 1;
            }
        }
    }

    /// Poisson packet arrivals during `(time, time + dt]` for active UEs,
    /// with exponentially distributed sizes redrawn above the cap.
    pub fn generate_traffic<R: Rng + ?Sized>(&mut self, dt_ms: f64, rng: &mut R) {
        let gap = self.interarrival();
        let mean_mbit = self.scenario.mean_packet_size_mbit;
        let size = Exp::new(1.0 / mean_mbit).expect("validated positive mean");
        let cap = self.params.max_packet_factor * mean_mbit;
        let t_end = self.time_ms + dt_ms;
        for u in self.ues.iter_mut().filter(|u| u.mode == UeMode::Active) {
            while u.next_arrival_ms <= t_end {
                let mbit = loop {
                    let s = size.sample(rng);
                    if s <= cap {
                        break s;
                    }
                };
                let bits = (mbit * BITS_PER_MBIT).round() as u64;
                u.pending_bits += bits;
                u.generated_bits += bits;
                self.stats.packets += 1;
                self.stats.generated_bits += bits;
                let g = gap.sample(rng);
                self.stats.record_gap(g);
                u.next_arrival_ms += g;
            }
        }
    }

    /// Drains pending bits at each active UE's link rate for `dt`, resetting
    /// the measurement window and crediting the channel ledgers. Interference
    /// uses the utilisation left by the previous step.
    pub fn deliver(&mut self, dt_ms: f64) {
        let dt_s = dt_ms / 1000.0;
        let interference: Vec<f64> = self
            .ues
            .iter()
            .map(|u| {
                if u.is_active() {
                    co_channel_interference(u.serving_channel, u.position, &self.channels, &self.topology)
                } else {
                    0.0
                }
            })
            .collect();
        for ch in 0..self.channels.len() {
            let channel = &mut self.channels[ch];
            channel.delivered_ledger.clear();
            let active: Vec<usize> = channel
                .attached_ues
                .iter()
                .copied()
                .filter(|&u| self.ues[u].is_active())
                .collect();
            let bs = channel.id.bs();
            let bw = self.topology.carriers[channel.id.carrier()].bandwidth_mhz;
            let mut busy_s = 0.0;
            for &u in &active {
                let d = self.topology.distance_to_bs(bs, self.ues[u].position);
                let capacity = self.topology.link.capacity_with_interference_mbps(d, interference[u], bw);
                let rate = capacity / active.len() as f64;
                let budget = (rate * BITS_PER_MBIT * dt_s).floor() as u64;
                let ue = &mut self.ues[u];
                let sent = ue.pending_bits.min(budget);
                ue.pending_bits -= sent;
                ue.delivered_bits += sent;
                channel.delivered_ledger.insert(u, sent);
                if capacity > 0.0 {
                    busy_s += sent as f64 / (capacity * BITS_PER_MBIT);
                }
            }
            channel.bandwidth_utilization = (busy_s / dt_s).clamp(0.0, 1.0);
        }
    }

    /// One simulator step of `scenario.step_duration_ms`: mode transitions,
    /// mobility, idle re-selection, active handoff, traffic, delivery.
    pub fn step_sim<R: Rng + ?Sized>(&mut self, balancing: &Balancing, rng: &mut R) -> Result<&StepCounters> {
        if let Balancing::Enabled(p) = balancing {
            if p.n_bs() != self.n_bs() {
                return Err(Error::contract(format!(
                    "balancing parameters for {} sites, network has {}",
                    p.n_bs(),
                    self.n_bs()
                )));
            }
        }
        let dt = self.scenario.step_duration_ms;
        self.last_step = StepCounters::default();
        self.transition_modes(dt, rng);
        self.move_ues(dt, rng);
        self.apply_iulb(balancing, rng);
        self.apply_aulb(balancing);
        self.generate_traffic(dt, rng);
        self.deliver(dt);
        self.time_ms += dt;
        Ok(&self.last_step)
    }

    /// Window length of the ledgers in seconds.
    pub fn window_s(&self) -> f64 {
        self.scenario.step_duration_ms / 1000.0
    }

    /// `(serving site, delivered Mbit)` for every active UE in the last window.
    pub fn window_deliveries(&self) -> Vec<(usize, f64)> {
        self.ues
            .iter()
            .filter(|u| u.is_active())
            .map(|u| {
                let bits = self.channels[u.serving_channel.0]
                    .delivered_ledger
                    .get(&u.id)
                    .copied()
                    .unwrap_or(0);
                (u.serving_channel.bs(), bits as f64 / BITS_PER_MBIT)
            })
            .collect()
    }

    /// Every UE attached to exactly its serving channel, and nothing else.
    pub fn check_custody(&self) -> Result<()> {
        let attached: usize = self.channels.iter().map(|c| c.attached_ues.len()).sum();
        if attached != self.ues.len() {
            return Err(Error::contract(format!(
                "{attached} attachments for {} UEs",
                self.ues.len()
            )));
        }
        for u in &self.ues {
            if !self.channels[u.serving_channel.0].attached_ues.contains(&u.id) {
                return Err(Error::contract(format!("UE {} missing from its serving channel", u.id)));
            }
        }
        Ok(())
    }

    /// Delivered plus pending equals generated, per UE and in total.
    pub fn check_conservation(&self) -> Result<()> {
        let mut total = 0u64;
        for u in &self.ues {
            if u.delivered_bits + u.pending_bits != u.generated_bits {
                return Err(Error::contract(format!(
                    "UE {}: delivered {} + pending {} != generated {}",
                    u.id, u.delivered_bits, u.pending_bits, u.generated_bits
                )));
            }
            total += u.delivered_bits + u.pending_bits;
        }
        if total != self.stats.generated_bits {
            return Err(Error::contract(format!(
                "network holds {total} bits, generated {}",
                self.stats.generated_bits
            )));
        }
        Ok(())
    }
}

fn sample_categorical<R: Rng + ?Sized>(p: &CarrierVector, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
