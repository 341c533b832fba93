//! Discrete-time cellular network simulator.

pub mod balancing;
pub mod link;
pub mod scenario;
pub mod state;
pub mod topology;

pub use balancing::{Balancing, BsKnobs, LbParameters};
pub use link::LinkModel;
pub use scenario::{ScenarioId, TrafficScenario};
pub use state::{co_channel_interference, compute_link_rate, ChannelState, NetworkState, SimParams, UeMode, UserEquipment};
pub use topology::{ChannelId, NetworkTopology, Point, SectorId};
