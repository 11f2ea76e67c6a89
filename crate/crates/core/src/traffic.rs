//! CBR traffic generation and the evaluation metrics: packet delivery
//! ratio, average end-to-end delay, routing overhead and throughput.

use std::collections::BTreeSet;

use crate::engine::SimTime;
use crate::NodeId;

/// Index of a CBR flow within the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

/// A constant-bit-rate source sending fixed-size packets from `src` to
/// `dest` every `interval_s` seconds while active.
#[derive(Debug, Clone)]
pub struct CbrFlow {
    pub id: FlowId,
    pub src: NodeId,
    pub dest: NodeId,
    pub packet_size_bytes: usize,
    pub interval_s: f64,
    pub start_at: SimTime,
    pub stop_at: SimTime,
}

/// One application-layer packet. `(flow, seq)` is unique.
#[derive(Debug, Clone, Copy)]
pub struct DataPacket {
    pub flow: FlowId,
    pub seq: u64,
    pub size_bytes: usize,
    pub generated_at: SimTime,
}

/// Emits the next packet of `flow` (seq `next_seq`) and returns it with
/// the time of the following tick, or `None` once `now` has reached
/// `stop_at`.
pub fn cbr_tick(flow: &CbrFlow, next_seq: u64, now: SimTime) -> Option<(DataPacket, SimTime)> {
    if now < flow.start_at || now >= flow.stop_at {
        return None;
    }
    let packet = DataPacket {
        flow: flow.id,
        seq: next_seq,
        size_bytes: flow.packet_size_bytes,
        generated_at: now,
    };
    Some((packet, now + flow.interval_s))
}

/// Counters and samples accumulated over one run, from which the four
/// evaluation metrics are computed.
#[derive(Debug, Clone, Default)]
pub struct MetricsLedger {
    pub generated: u64,
    pub delivered: u64,
    pub delivered_bytes: u64,
    pub delay_samples: Vec<f64>,
    /// Every RREQ/RREP/RERR/WRNG transmission, counted per hop.
    pub routing_packets_tx: u64,
    /// RREQ flood originations, retries included.
    pub discoveries_initiated: u64,
    pub wrng_sent: u64,

    // Diagnostic counters, not part of the CSV schema.
    pub link_breaks: u64,
    pub rerr_sent: u64,
    pub data_dropped_buffer: u64,
    pub data_dropped_no_route: u64,
    pub rrep_dropped_no_reverse: u64,
    pub anomalies: u64,

    delivered_keys: BTreeSet<(FlowId, u64)>,
}

impl MetricsLedger {
    pub fn record_generated(&mut self) {
        self.generated += 1;
    }

    /// Records a successful delivery. Duplicate `(flow, seq)` deliveries
    /// are impossible under unicast forwarding, so they are asserted
    /// rather than silently tolerated.
    pub fn record_delivery(&mut self, packet: &DataPacket, now: SimTime) {
        assert!(
            self.delivered_keys.insert((packet.flow, packet.seq)),
            "duplicate delivery of flow {:?} seq {}",
            packet.flow,
            packet.seq
        );
        let delay = now - packet.generated_at;
        assert!(delay > 0.0, "delivery cannot precede generation");
        self.delivered += 1;
        self.delivered_bytes += packet.size_bytes as u64;
        self.delay_samples.push(delay);
        debug_assert!(self.delivered <= self.generated, "conservation violated");
    }

    pub fn record_routing_tx(&mut self) {
        self.routing_packets_tx += 1;
    }

    /// Packet delivery ratio: delivered over generated, 1.0 when nothing
    /// was generated.
    pub fn pdr(&self) -> f64 {
        if self.generated == 0 {
            1.0
        } else {
            self.delivered as f64 / self.generated as f64
        }
    }

    /// Mean end-to-end delay over successfully delivered packets,
    /// seconds; 0 when nothing was delivered.
    pub fn avg_delay_s(&self) -> f64 {
        if self.delay_samples.is_empty() {
            0.0
        } else {
            self.delay_samples.iter().sum::<f64>() / self.delay_samples.len() as f64
        }
    }

    /// Routing packets transmitted per data packet delivered. Infinite
    /// when control traffic flowed but nothing was delivered; 0 when the
    /// run was entirely idle.
    pub fn overhead(&self) -> f64 {
        if self.delivered > 0 {
            self.routing_packets_tx as f64 / self.delivered as f64
        } else if self.routing_packets_tx > 0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Delivered application bits per second of simulated time.
    pub fn throughput_bps(&self, duration_s: f64) -> f64 {
        assert!(duration_s > 0.0, "duration must be positive");
        self.delivered_bytes as f64 * 8.0 / duration_s
    }
}
