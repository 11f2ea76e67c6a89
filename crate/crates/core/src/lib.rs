//! Deterministic discrete-event simulation of mobile ad-hoc networks
//! running the AOMDV multipath routing protocol, plus an enhanced mode
//! (EAOMDV) that predicts link failures preemptively from the signal
//! power each receiver measures.
//!
//! The crate is organized around six pieces:
//!
//! * [`engine`] — virtual clock, event queue, seeded randomness
//! * [`mobility`] — random-waypoint movement in a rectangular arena
//! * [`radio`] — free-space (Friis) propagation and the ideal channel
//! * [`protocol`] — the per-node routing state machine, both modes
//! * [`traffic`] — CBR sources and the evaluation metrics
//! * [`scenario`] — config files, single runs and comparison sweeps
//!
//! Everything a run does is a pure function of its `(config, seed)`
//! pair: same inputs, byte-identical trace and CSV output.

use std::fmt;

pub mod engine;
pub mod mobility;
pub mod protocol;
pub mod radio;
pub mod scenario;
pub mod trace;
pub mod traffic;
pub mod world;

/// Identifies a node within one scenario. Nodes are numbered densely
/// from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use engine::{EventAction, EventQueue, SimRng, SimTime};
pub use protocol::{ProtocolConfig, ProtocolMode};
pub use scenario::{run_compare, run_once, CompareReport, ConfigError, RunResult, ScenarioConfig};
pub use traffic::{CbrFlow, DataPacket, FlowId, MetricsLedger};
pub use world::World;
