//! Per-node multipath routing state machine.
//!
//! Handlers mutate only the node they run on and describe everything
//! else (transmissions, timers, drops) as [`Action`]s for the event loop
//! to execute, which keeps every rule unit-testable without a radio or a
//! clock.
//!
//! Both protocol modes share the same machinery. The enhanced mode adds
//! one gate at route-request reception: a request heard below the warn
//! threshold is dropped and answered with a warning packet instead of
//! creating a reverse path, so routes never form over links that are
//! about to break.

mod packets;
mod table;

pub use packets::{ControlPacket, Packet, Rerr, Rrep, Rreq, Wrng};
pub use table::{route_update_rule, OfferedPath, PathEntry, RouteEntry, UpdateOutcome};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::traffic::DataPacket;
use crate::NodeId;

/// Which protocol every node in the run speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    Aomdv,
    Eaomdv,
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolMode::Aomdv => write!(f, "aomdv"),
            ProtocolMode::Eaomdv => write!(f, "eaomdv"),
        }
    }
}

impl FromStr for ProtocolMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aomdv" => Ok(ProtocolMode::Aomdv),
            "eaomdv" => Ok(ProtocolMode::Eaomdv),
            other => Err(format!("unknown protocol '{other}' (expected aomdv or eaomdv)")),
        }
    }
}

/// Routing-layer tunables, shared by all nodes of a run.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub mode: ProtocolMode,
    /// Prediction cutoff in watts; relevant only in enhanced mode.
    pub warn_threshold_w: f64,
    /// Path lifetime from last use or refresh.
    pub route_lifetime_s: f64,
    /// How long a warned-about neighbor stays demoted.
    pub blacklist_ttl_s: f64,
    /// First discovery timeout; doubles per attempt.
    pub discovery_timeout_s: f64,
    /// Total flood attempts before buffered data is dropped.
    pub discovery_attempts: u32,
    /// Bounded data buffer per node; oldest packet is dropped on overflow.
    pub buffer_cap: usize,
}

impl Default for ProtocolConfig {
    fn default() -> ProtocolConfig {
        ProtocolConfig {
            mode: ProtocolMode::Aomdv,
            warn_threshold_w: 0.0,
            route_lifetime_s: 10.0,
            blacklist_ttl_s: 2.0,
            discovery_timeout_s: 1.0,
            discovery_attempts: 3,
            buffer_cap: 64,
        }
    }
}

/// Protocol timers delivered back through the event queue.
#[derive(Debug, Clone, Copy)]
pub enum TimerKind {
    DiscoveryTimeout { dest: NodeId, attempt: u32 },
}

/// Why the protocol layer discarded a data packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataDropReason {
    BufferFull,
    RetriesExhausted,
}

/// Control-plane discards worth counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlDrop {
    RrepNoReversePath,
    WrngUnexpectedMode,
}

/// What a handler wants the event loop to do on its behalf.
#[derive(Debug)]
pub enum Action {
    Broadcast(ControlPacket),
    Unicast {
        next_hop: NodeId,
        packet: ControlPacket,
    },
    ForwardData {
        next_hop: NodeId,
        packet: DataPacket,
        dest: NodeId,
    },
    StartTimer {
        timer: TimerKind,
        delay_s: f64,
    },
    DropData {
        packet: DataPacket,
        reason: DataDropReason,
    },
    DropControl(ControlDrop),
}

#[derive(Debug, Clone, Copy)]
struct PendingDiscovery {
    attempt: u32,
}

/// One simulated host's routing state.
#[derive(Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub seqno: u64,
    next_broadcast_id: u64,
    route_table: BTreeMap<NodeId, RouteEntry>,
    /// Floods already relayed (or originated); one relay per flood.
    seen_rreqs: BTreeSet<(NodeId, u64)>,
    /// Floods already answered with a warning; one warning per flood.
    warned_floods: BTreeSet<(NodeId, u64)>,
    /// Per-flood sequence number used for replies at the destination, so
    /// every reverse path of one flood is answered at the same seqno.
    replied_floods: BTreeMap<(NodeId, u64), u64>,
    /// Neighbors reported weak, with blacklist expiry.
    weak_links: BTreeMap<NodeId, SimTime>,
    data_buffer: VecDeque<(DataPacket, NodeId)>,
    pending_discoveries: BTreeMap<NodeId, PendingDiscovery>,
    /// Destinations whose entry changed since the last drain; consumed by
    /// the invariant checker.
    dirty_dests: Vec<NodeId>,
}

impl NodeState {
    pub fn new(id: NodeId) -> NodeState {
        NodeState {
            id,
            seqno: 0,
            next_broadcast_id: 0,
            route_table: BTreeMap::new(),
            seen_rreqs: BTreeSet::new(),
            warned_floods: BTreeSet::new(),
            replied_floods: BTreeMap::new(),
            weak_links: BTreeMap::new(),
            data_buffer: VecDeque::new(),
            pending_discoveries: BTreeMap::new(),
            dirty_dests: Vec::new(),
        }
    }

    pub fn route_entry(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.route_table.get(&dest)
    }

    pub fn buffered_packets(&self) -> usize {
        self.data_buffer.len()
    }

    pub fn has_pending_discovery(&self, dest: NodeId) -> bool {
        self.pending_discoveries.contains_key(&dest)
    }

    pub fn is_blacklisted(&self, peer: NodeId, now: SimTime) -> bool {
        self.weak_links.get(&peer).is_some_and(|&until| until > now)
    }

    pub fn take_dirty_dests(&mut self) -> Vec<NodeId> {
        std::mem::take(&mut self.dirty_dests)
    }

    /// Route-update front door: applies the table rule unless the offered
    /// next hop is currently blacklisted.
    fn update_route(
        &mut self,
        dest: NodeId,
        offered: OfferedPath,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> UpdateOutcome {
        if self.is_blacklisted(offered.next_hop, now) {
            return UpdateOutcome::Rejected;
        }
        let mut slot = self.route_table.remove(&dest);
        let outcome = route_update_rule(&mut slot, dest, offered, cfg.route_lifetime_s, now);
        if let Some(entry) = slot {
            // Pathless entries are kept: they remember the freshest seqno.
            self.route_table.insert(dest, entry);
        }
        if outcome != UpdateOutcome::Rejected {
            self.dirty_dests.push(dest);
        }
        outcome
    }

    /// Best usable path right now: unexpired, not via a blacklisted
    /// neighbor, minimal hopcount, ties broken by lowest next-hop id.
    /// Does not mutate; use [`NodeState::select_route`] when forwarding.
    pub fn peek_route(&self, dest: NodeId, now: SimTime) -> Option<PathEntry> {
        let entry = self.route_table.get(&dest)?;
        entry
            .paths
            .iter()
            .filter(|p| p.expires_at > now && !self.is_blacklisted(p.next_hop, now))
            .min_by_key(|p| (p.hopcount, p.next_hop))
            .copied()
    }

    /// Like [`NodeState::peek_route`] but refreshes the chosen path's
    /// lifetime, since selection here means the path is being used.
    pub fn select_route(
        &mut self,
        dest: NodeId,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Option<PathEntry> {
        let chosen = self.peek_route(dest, now)?;
        let entry = self.route_table.get_mut(&dest).unwrap();
        entry.prune_expired(now);
        for path in &mut entry.paths {
            if path.next_hop == chosen.next_hop && path.first_hop == chosen.first_hop {
                path.expires_at = now + cfg.route_lifetime_s;
            }
        }
        Some(chosen)
    }

    /// Starts a route discovery for `dest`: bump own seqno, open a fresh
    /// flood and arm the first timeout.
    ///
    /// Callers guarantee there is no usable path and no discovery already
    /// pending for `dest`.
    pub fn initiate_discovery(
        &mut self,
        dest: NodeId,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        debug_assert!(self.peek_route(dest, now).is_none());
        debug_assert!(!self.pending_discoveries.contains_key(&dest));
        self.pending_discoveries
            .insert(dest, PendingDiscovery { attempt: 1 });
        self.flood_rreq(dest, 1, cfg)
    }

    fn flood_rreq(&mut self, dest: NodeId, attempt: u32, cfg: &ProtocolConfig) -> Vec<Action> {
        self.seqno += 1;
        let broadcast_id = self.next_broadcast_id;
        self.next_broadcast_id += 1;
        let rreq = Rreq {
            src: self.id,
            src_seqno: self.seqno,
            broadcast_id,
            dest,
            dest_seqno_known: self.route_table.get(&dest).map(|e| e.seqno),
            hopcount: 0,
            first_hop: None,
        };
        let timeout = cfg.discovery_timeout_s * f64::from(1u32 << (attempt - 1));
        vec![
            Action::Broadcast(ControlPacket::Rreq(rreq)),
            Action::StartTimer {
                timer: TimerKind::DiscoveryTimeout { dest, attempt },
                delay_s: timeout,
            },
        ]
    }

    /// A discovery timeout fired. Stale timers (the discovery finished or
    /// was superseded) are ignored; otherwise either the next attempt is
    /// flooded with a doubled timeout, or the discovery is closed and the
    /// data buffered for that destination is dropped.
    pub fn handle_discovery_timeout(
        &mut self,
        dest: NodeId,
        attempt: u32,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        let _ = now;
        match self.pending_discoveries.get(&dest) {
            Some(pending) if pending.attempt == attempt => {}
            _ => return Vec::new(),
        }
        if attempt < cfg.discovery_attempts {
            let next = attempt + 1;
            self.pending_discoveries
                .insert(dest, PendingDiscovery { attempt: next });
            self.flood_rreq(dest, next, cfg)
        } else {
            self.pending_discoveries.remove(&dest);
            self.drain_buffer_for(dest)
                .into_iter()
                .map(|packet| Action::DropData {
                    packet,
                    reason: DataDropReason::RetriesExhausted,
                })
                .collect()
        }
    }

    fn drain_buffer_for(&mut self, dest: NodeId) -> Vec<DataPacket> {
        let mut drained = Vec::new();
        self.data_buffer.retain(|(packet, d)| {
            if *d == dest {
                drained.push(*packet);
                false
            } else {
                true
            }
        });
        drained
    }

    /// Route-request reception with measured received power `pr_w`.
    pub fn handle_rreq(
        &mut self,
        rreq: &Rreq,
        pr_w: f64,
        sender: NodeId,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        if rreq.src == self.id {
            // Echo of our own flood.
            return Vec::new();
        }
        let flood = (rreq.src, rreq.broadcast_id);

        // Preemptive link-failure gate, enhanced mode only: a request
        // heard below the warn threshold creates no reverse path; the
        // sender gets warned once per flood.
        if cfg.mode == ProtocolMode::Eaomdv && pr_w < cfg.warn_threshold_w {
            if self.warned_floods.insert(flood) {
                return vec![Action::Unicast {
                    next_hop: sender,
                    packet: ControlPacket::Wrng(Wrng {
                        weak_node: self.id,
                        rreq_src: rreq.src,
                        broadcast_id: rreq.broadcast_id,
                    }),
                }];
            }
            return Vec::new();
        }

        let offered = OfferedPath {
            seqno: rreq.src_seqno,
            hopcount: rreq.hopcount + 1,
            next_hop: sender,
            first_hop: rreq.first_hop.unwrap_or(self.id),
        };
        let outcome = self.update_route(rreq.src, offered, cfg, now);

        if rreq.dest == self.id {
            // Destination: answer each newly recorded disjoint reverse
            // path; every reply of one flood carries the same seqno.
            if outcome == UpdateOutcome::Rejected {
                return Vec::new();
            }
            if !self.replied_floods.contains_key(&flood) {
                self.seqno = self.seqno.max(rreq.dest_seqno_known.unwrap_or(0)) + 1;
                self.replied_floods.insert(flood, self.seqno);
            }
            let dest_seqno = self.replied_floods[&flood];
            return vec![Action::Unicast {
                next_hop: sender,
                packet: ControlPacket::Rrep(Rrep {
                    dest: self.id,
                    dest_seqno,
                    src: rreq.src,
                    hopcount: 0,
                    reply_path_id: offered.first_hop,
                }),
            }];
        }

        // Relaying without a recorded reverse path would advertise a
        // route this node never committed to (possible when the sender
        // is blacklisted), which is exactly how forwarding loops form.
        // A rejected copy is discarded; a later acceptable copy may
        // still carry the flood onward.
        if outcome == UpdateOutcome::Rejected {
            return Vec::new();
        }

        if self.seen_rreqs.insert(flood) {
            // Relay exactly once per flood, stamping ourselves as first
            // hop if the request came straight from the source.
            let mut relayed = *rreq;
            relayed.hopcount += 1;
            relayed.first_hop = Some(rreq.first_hop.unwrap_or(self.id));
            vec![Action::Broadcast(ControlPacket::Rreq(relayed))]
        } else {
            // Duplicate: kept only for the disjoint reverse path it just
            // added; never re-relayed.
            Vec::new()
        }
    }

    /// Route-reply reception.
    pub fn handle_rrep(
        &mut self,
        rrep: &Rrep,
        sender: NodeId,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        let offered = OfferedPath {
            seqno: rrep.dest_seqno,
            hopcount: rrep.hopcount + 1,
            next_hop: sender,
            first_hop: sender,
        };
        self.update_route(rrep.dest, offered, cfg, now);

        if rrep.src == self.id {
            if self.peek_route(rrep.dest, now).is_none() {
                // Install failed (e.g. blacklisted reply path); leave the
                // pending discovery armed for another reply or retry.
                return Vec::new();
            }
            self.pending_discoveries.remove(&rrep.dest);
            let mut actions = Vec::new();
            for packet in self.drain_buffer_for(rrep.dest) {
                match self.select_route(rrep.dest, cfg, now) {
                    Some(path) => actions.push(Action::ForwardData {
                        next_hop: path.next_hop,
                        packet,
                        dest: rrep.dest,
                    }),
                    None => actions.push(Action::DropData {
                        packet,
                        reason: DataDropReason::RetriesExhausted,
                    }),
                }
            }
            return actions;
        }

        // Forward along the reverse path this reply names. The first hop
        // recorded for a path is identical at every node the flood copy
        // traversed, so the id resolves consistently hop by hop.
        let Some(entry) = self.route_table.get_mut(&rrep.src) else {
            return vec![Action::DropControl(ControlDrop::RrepNoReversePath)];
        };
        entry.prune_expired(now);
        let Some(path) = entry
            .paths
            .iter_mut()
            .find(|p| p.first_hop == rrep.reply_path_id)
        else {
            return vec![Action::DropControl(ControlDrop::RrepNoReversePath)];
        };
        path.expires_at = now + cfg.route_lifetime_s;
        let next_hop = path.next_hop;
        let mut forwarded = *rrep;
        forwarded.hopcount += 1;
        vec![Action::Unicast {
            next_hop,
            packet: ControlPacket::Rrep(forwarded),
        }]
    }

    /// Warning reception: blacklist the weak node for the configured TTL
    /// (extending an existing entry), so new paths avoid stamping it as
    /// next hop and existing paths through it are skipped by selection.
    pub fn handle_wrng(&mut self, wrng: &Wrng, cfg: &ProtocolConfig, now: SimTime) -> Vec<Action> {
        if cfg.mode != ProtocolMode::Eaomdv {
            return vec![Action::DropControl(ControlDrop::WrngUnexpectedMode)];
        }
        let until = now + cfg.blacklist_ttl_s;
        let slot = self.weak_links.entry(wrng.weak_node).or_insert(until);
        if *slot < until {
            *slot = until;
        }
        // The forwarding graph just changed for every entry routed
        // through the weak node.
        let affected: Vec<NodeId> = self
            .route_table
            .iter()
            .filter(|(_, e)| e.paths.iter().any(|p| p.next_hop == wrng.weak_node))
            .map(|(dest, _)| *dest)
            .collect();
        self.dirty_dests.extend(affected);
        Vec::new()
    }

    /// Originates or forwards a data packet. With no usable route the
    /// packet is buffered (dropping the oldest if the buffer is full) and
    /// a discovery is started unless one is already pending.
    pub fn send_data(
        &mut self,
        packet: DataPacket,
        dest: NodeId,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        assert_ne!(dest, self.id, "send_data cannot target the local node");
        if let Some(path) = self.select_route(dest, cfg, now) {
            return vec![Action::ForwardData {
                next_hop: path.next_hop,
                packet,
                dest,
            }];
        }
        let mut actions = Vec::new();
        if self.data_buffer.len() >= cfg.buffer_cap {
            let (oldest, _) = self.data_buffer.pop_front().unwrap();
            actions.push(Action::DropData {
                packet: oldest,
                reason: DataDropReason::BufferFull,
            });
        }
        self.data_buffer.push_back((packet, dest));
        if !self.pending_discoveries.contains_key(&dest) {
            actions.extend(self.initiate_discovery(dest, cfg, now));
        }
        actions
    }

    /// Link-layer feedback: the unicast toward `broken` failed. Every
    /// path through that neighbor is removed; destinations left with no
    /// path at all are announced in one route error broadcast. An
    /// in-flight data packet is re-routed over a surviving path when one
    /// exists, otherwise buffered behind a fresh discovery.
    pub fn handle_link_break(
        &mut self,
        broken: NodeId,
        in_flight: Option<(DataPacket, NodeId)>,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        let mut lost_last = Vec::new();
        for (dest, entry) in self.route_table.iter_mut() {
            let before = entry.paths.len();
            entry.paths.retain(|p| p.next_hop != broken);
            if entry.paths.len() != before {
                self.dirty_dests.push(*dest);
                if before > 0 && entry.paths.is_empty() {
                    lost_last.push((*dest, entry.seqno));
                }
            }
        }
        let mut actions = Vec::new();
        if !lost_last.is_empty() {
            actions.push(Action::Broadcast(ControlPacket::Rerr(Rerr {
                unreachable: lost_last,
            })));
        }
        if let Some((packet, dest)) = in_flight {
            actions.extend(self.send_data(packet, dest, cfg, now));
        }
        actions
    }

    /// Route-error reception from `sender`: drops the named destinations'
    /// paths through that neighbor (when not fresher than the error) and
    /// propagates one error for entries that just lost their last path.
    pub fn handle_rerr(
        &mut self,
        rerr: &Rerr,
        sender: NodeId,
        _cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Vec<Action> {
        let _ = now;
        let mut propagate = Vec::new();
        for &(dest, seqno) in &rerr.unreachable {
            let Some(entry) = self.route_table.get_mut(&dest) else {
                continue;
            };
            if entry.seqno > seqno {
                continue;
            }
            let before = entry.paths.len();
            entry.paths.retain(|p| p.next_hop != sender);
            if entry.paths.len() != before {
                self.dirty_dests.push(dest);
                if before > 0 && entry.paths.is_empty() {
                    propagate.push((dest, entry.seqno));
                }
            }
        }
        if propagate.is_empty() {
            Vec::new()
        } else {
            vec![Action::Broadcast(ControlPacket::Rerr(Rerr {
                unreachable: propagate,
            }))]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: ProtocolMode) -> ProtocolConfig {
        ProtocolConfig {
            mode,
            warn_threshold_w: 1.0e-9,
            ..ProtocolConfig::default()
        }
    }

    fn t(secs: f64) -> SimTime {
        SimTime::from_secs(secs)
    }

    fn rreq(src: u32, bid: u64, dest: u32, hopcount: u32, first_hop: Option<u32>) -> Rreq {
        Rreq {
            src: NodeId(src),
            src_seqno: 1,
            broadcast_id: bid,
            dest: NodeId(dest),
            dest_seqno_known: None,
            hopcount,
            first_hop: first_hop.map(NodeId),
        }
    }

    fn packet(seq: u64) -> DataPacket {
        DataPacket {
            flow: crate::traffic::FlowId(0),
            seq,
            size_bytes: 512,
            generated_at: SimTime::ZERO,
        }
    }

    #[test]
    fn weak_rreq_is_dropped_and_warned_once_per_flood() {
        let mut node = NodeState::new(NodeId(2));
        let cfg = cfg(ProtocolMode::Eaomdv);
        let weak = 0.5 * cfg.warn_threshold_w;

        let actions = node.handle_rreq(&rreq(0, 0, 9, 0, None), weak, NodeId(0), &cfg, t(1.0));
        assert_eq!(actions.len(), 1);
        match &actions[0] {
            Action::Unicast {
                next_hop,
                packet: ControlPacket::Wrng(w),
            } => {
                assert_eq!(*next_hop, NodeId(0));
                assert_eq!(w.weak_node, NodeId(2));
                assert_eq!(w.rreq_src, NodeId(0));
            }
            other => panic!("expected WRNG unicast, got {other:?}"),
        }
        assert!(node.route_entry(NodeId(0)).is_none(), "no reverse path");

        // Second weak copy of the same flood: silent drop.
        let again = node.handle_rreq(&rreq(0, 0, 9, 1, Some(1)), weak, NodeId(1), &cfg, t(1.1));
        assert!(again.is_empty());
    }

    #[test]
    fn rreq_at_warn_threshold_is_processed() {
        let mut node = NodeState::new(NodeId(2));
        let cfg = cfg(ProtocolMode::Eaomdv);
        let actions = node.handle_rreq(
            &rreq(0, 0, 9, 0, None),
            cfg.warn_threshold_w,
            NodeId(0),
            &cfg,
            t(1.0),
        );
        assert!(matches!(
            actions.as_slice(),
            [Action::Broadcast(ControlPacket::Rreq(_))]
        ));
        assert!(node.route_entry(NodeId(0)).is_some());
    }

    #[test]
    fn aomdv_mode_ignores_received_power() {
        let mut node = NodeState::new(NodeId(2));
        let cfg = cfg(ProtocolMode::Aomdv);
        let tiny = 1.0e-30;
        let actions = node.handle_rreq(&rreq(0, 0, 9, 0, None), tiny, NodeId(0), &cfg, t(1.0));
        assert!(matches!(
            actions.as_slice(),
            [Action::Broadcast(ControlPacket::Rreq(_))]
        ));
    }

    #[test]
    fn relays_once_and_stamps_first_hop() {
        let mut node = NodeState::new(NodeId(2));
        let cfg = cfg(ProtocolMode::Aomdv);
        let actions = node.handle_rreq(&rreq(0, 0, 9, 0, None), 1.0, NodeId(0), &cfg, t(1.0));
        match &actions[..] {
            [Action::Broadcast(ControlPacket::Rreq(relayed))] => {
                assert_eq!(relayed.hopcount, 1);
                assert_eq!(relayed.first_hop, Some(NodeId(2)));
            }
            other => panic!("expected relay, got {other:?}"),
        }
        // Duplicate with the same first hop: discarded, not re-relayed.
        let dup = node.handle_rreq(&rreq(0, 0, 9, 1, Some(2)), 1.0, NodeId(3), &cfg, t(1.1));
        assert!(dup.is_empty());
    }

    #[test]
    fn destination_replies_per_disjoint_reverse_path() {
        let mut dest = NodeState::new(NodeId(9));
        let cfg = cfg(ProtocolMode::Aomdv);
        // Two copies of the same flood via different first hops, as in a
        // diamond topology.
        let a1 = dest.handle_rreq(&rreq(0, 0, 9, 1, Some(1)), 1.0, NodeId(1), &cfg, t(1.0));
        let a2 = dest.handle_rreq(&rreq(0, 0, 9, 1, Some(2)), 1.0, NodeId(2), &cfg, t(1.1));
        let seqnos: Vec<u64> = [&a1, &a2]
            .iter()
            .map(|actions| match &actions[..] {
                [Action::Unicast {
                    packet: ControlPacket::Rrep(r),
                    ..
                }] => r.dest_seqno,
                other => panic!("expected one RREP, got {other:?}"),
            })
            .collect();
        assert_eq!(seqnos[0], seqnos[1], "one seqno per flood");
        let entry = dest.route_entry(NodeId(0)).unwrap();
        assert_eq!(entry.paths.len(), 2);

        // Third copy with an already-known first hop: no reply.
        let a3 = dest.handle_rreq(&rreq(0, 0, 9, 2, Some(1)), 1.0, NodeId(3), &cfg, t(1.2));
        assert!(a3.is_empty());
    }

    #[test]
    fn select_route_prefers_short_paths_then_low_ids() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 3,
                next_hop: NodeId(7),
                first_hop: NodeId(7),
            },
            &cfg,
            t(0.0),
        );
        node.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 2,
                next_hop: NodeId(5),
                first_hop: NodeId(5),
            },
            &cfg,
            t(0.0),
        );
        assert_eq!(node.peek_route(dest, t(1.0)).unwrap().next_hop, NodeId(5));

        // Tie on hopcount: lowest next-hop id wins.
        let mut tie = NodeState::new(NodeId(0));
        tie.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 2,
                next_hop: NodeId(7),
                first_hop: NodeId(7),
            },
            &cfg,
            t(0.0),
        );
        tie.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 2,
                next_hop: NodeId(3),
                first_hop: NodeId(3),
            },
            &cfg,
            t(0.0),
        );
        assert_eq!(tie.peek_route(dest, t(1.0)).unwrap().next_hop, NodeId(3));
    }

    #[test]
    fn blacklisted_paths_are_skipped_until_expiry() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Eaomdv);
        let dest = NodeId(9);
        node.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 2,
                next_hop: NodeId(3),
                first_hop: NodeId(3),
            },
            &cfg,
            t(0.0),
        );
        node.update_route(
            dest,
            OfferedPath {
                seqno: 1,
                hopcount: 2,
                next_hop: NodeId(4),
                first_hop: NodeId(4),
            },
            &cfg,
            t(0.0),
        );
        let wrng = Wrng {
            weak_node: NodeId(3),
            rreq_src: NodeId(0),
            broadcast_id: 0,
        };
        node.handle_wrng(&wrng, &cfg, t(1.0));
        assert_eq!(node.peek_route(dest, t(1.5)).unwrap().next_hop, NodeId(4));
        // Past the blacklist TTL the better id is selectable again.
        assert_eq!(node.peek_route(dest, t(3.5)).unwrap().next_hop, NodeId(3));
    }

    #[test]
    fn repeated_wrng_extends_single_blacklist_entry() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Eaomdv);
        let wrng = Wrng {
            weak_node: NodeId(3),
            rreq_src: NodeId(0),
            broadcast_id: 0,
        };
        node.handle_wrng(&wrng, &cfg, t(1.0));
        node.handle_wrng(&wrng, &cfg, t(2.0));
        assert_eq!(node.weak_links.len(), 1);
        assert!(node.is_blacklisted(NodeId(3), t(3.5)));
        assert!(!node.is_blacklisted(NodeId(3), t(4.0)));
    }

    #[test]
    fn wrng_in_plain_mode_is_an_anomaly() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let wrng = Wrng {
            weak_node: NodeId(3),
            rreq_src: NodeId(0),
            broadcast_id: 0,
        };
        let actions = node.handle_wrng(&wrng, &cfg, t(1.0));
        assert!(matches!(
            actions.as_slice(),
            [Action::DropControl(ControlDrop::WrngUnexpectedMode)]
        ));
        assert!(node.weak_links.is_empty());
    }

    #[test]
    fn link_break_keeps_backup_and_reroutes_in_flight() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        for (hop, hc) in [(3u32, 2u32), (4, 2)] {
            node.update_route(
                dest,
                OfferedPath {
                    seqno: 1,
                    hopcount: hc,
                    next_hop: NodeId(hop),
                    first_hop: NodeId(hop),
                },
                &cfg,
                t(0.0),
            );
        }
        let actions = node.handle_link_break(NodeId(3), Some((packet(0), dest)), &cfg, t(1.0));
        // Backup survives: no RERR, data continues immediately.
        match &actions[..] {
            [Action::ForwardData { next_hop, .. }] => assert_eq!(*next_hop, NodeId(4)),
            other => panic!("expected re-routed data, got {other:?}"),
        }
        assert_eq!(node.route_entry(dest).unwrap().paths.len(), 1);
    }

    #[test]
    fn last_path_break_raises_rerr_and_rediscovers() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.update_route(
            dest,
            OfferedPath {
                seqno: 5,
                hopcount: 2,
                next_hop: NodeId(3),
                first_hop: NodeId(3),
            },
            &cfg,
            t(0.0),
        );
        let actions = node.handle_link_break(NodeId(3), Some((packet(0), dest)), &cfg, t(1.0));
        let mut saw_rerr = false;
        let mut saw_rreq = false;
        for action in &actions {
            match action {
                Action::Broadcast(ControlPacket::Rerr(r)) => {
                    assert_eq!(r.unreachable, vec![(dest, 5)]);
                    saw_rerr = true;
                }
                Action::Broadcast(ControlPacket::Rreq(r)) => {
                    assert_eq!(r.dest, dest);
                    saw_rreq = true;
                }
                _ => {}
            }
        }
        assert!(saw_rerr && saw_rreq);
        assert_eq!(node.buffered_packets(), 1);
    }

    #[test]
    fn link_break_for_unknown_neighbor_is_noop() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let actions = node.handle_link_break(NodeId(42), None, &cfg, t(1.0));
        assert!(actions.is_empty());
    }

    #[test]
    fn rerr_removes_only_matching_paths_and_propagates() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.update_route(
            dest,
            OfferedPath {
                seqno: 5,
                hopcount: 2,
                next_hop: NodeId(3),
                first_hop: NodeId(3),
            },
            &cfg,
            t(0.0),
        );
        let rerr = Rerr {
            unreachable: vec![(dest, 5), (NodeId(77), 1)],
        };
        let actions = node.handle_rerr(&rerr, NodeId(3), &cfg, t(1.0));
        match &actions[..] {
            [Action::Broadcast(ControlPacket::Rerr(fwd))] => {
                assert_eq!(fwd.unreachable, vec![(dest, 5)]);
            }
            other => panic!("expected propagated RERR, got {other:?}"),
        }
        // Same content again: idempotent no-op.
        let again = node.handle_rerr(&rerr, NodeId(3), &cfg, t(1.1));
        assert!(again.is_empty());
    }

    #[test]
    fn rerr_ignores_fresher_entries() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.update_route(
            dest,
            OfferedPath {
                seqno: 8,
                hopcount: 2,
                next_hop: NodeId(3),
                first_hop: NodeId(3),
            },
            &cfg,
            t(0.0),
        );
        let rerr = Rerr {
            unreachable: vec![(dest, 5)],
        };
        let actions = node.handle_rerr(&rerr, NodeId(3), &cfg, t(1.0));
        assert!(actions.is_empty());
        assert_eq!(node.route_entry(dest).unwrap().paths.len(), 1);
    }

    #[test]
    fn send_data_without_route_buffers_and_discovers() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let actions = node.send_data(packet(0), NodeId(9), &cfg, t(1.0));
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Broadcast(ControlPacket::Rreq(_)))));
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::StartTimer { .. })));
        assert_eq!(node.buffered_packets(), 1);

        // Second packet while the discovery is pending: buffer only.
        let more = node.send_data(packet(1), NodeId(9), &cfg, t(1.1));
        assert!(more.is_empty());
        assert_eq!(node.buffered_packets(), 2);
    }

    #[test]
    fn full_buffer_drops_oldest() {
        let mut node = NodeState::new(NodeId(0));
        let mut cfg = cfg(ProtocolMode::Aomdv);
        cfg.buffer_cap = 3;
        for seq in 0..3 {
            node.send_data(packet(seq), NodeId(9), &cfg, t(1.0));
        }
        let actions = node.send_data(packet(3), NodeId(9), &cfg, t(1.2));
        match &actions[..] {
            [Action::DropData { packet, reason }] => {
                assert_eq!(packet.seq, 0);
                assert_eq!(*reason, DataDropReason::BufferFull);
            }
            other => panic!("expected oldest packet dropped, got {other:?}"),
        }
        assert_eq!(node.buffered_packets(), 3);
    }

    #[test]
    fn third_timeout_closes_discovery_and_drops_buffer() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.send_data(packet(0), dest, &cfg, t(0.0));

        // First timeout: second flood, doubled timer.
        let second = node.handle_discovery_timeout(dest, 1, &cfg, t(1.0));
        match &second[..] {
            [Action::Broadcast(ControlPacket::Rreq(_)), Action::StartTimer { delay_s, .. }] => {
                assert_eq!(*delay_s, 2.0);
            }
            other => panic!("expected second flood, got {other:?}"),
        }
        // Second timeout: third flood, doubled again.
        let third = node.handle_discovery_timeout(dest, 2, &cfg, t(3.0));
        match &third[..] {
            [Action::Broadcast(ControlPacket::Rreq(_)), Action::StartTimer { delay_s, .. }] => {
                assert_eq!(*delay_s, 4.0);
            }
            other => panic!("expected third flood, got {other:?}"),
        }
        // Third timeout: closed, buffered data dropped.
        let closed = node.handle_discovery_timeout(dest, 3, &cfg, t(7.0));
        match &closed[..] {
            [Action::DropData { reason, .. }] => {
                assert_eq!(*reason, DataDropReason::RetriesExhausted);
            }
            other => panic!("expected buffered data dropped, got {other:?}"),
        }
        assert!(!node.has_pending_discovery(dest));
        assert_eq!(node.buffered_packets(), 0);

        // A stale timer after closure is ignored.
        assert!(node.handle_discovery_timeout(dest, 3, &cfg, t(8.0)).is_empty());
    }

    #[test]
    fn rrep_at_source_flushes_buffer_fifo() {
        let mut node = NodeState::new(NodeId(0));
        let cfg = cfg(ProtocolMode::Aomdv);
        let dest = NodeId(9);
        node.send_data(packet(0), dest, &cfg, t(0.0));
        node.send_data(packet(1), dest, &cfg, t(0.1));

        let rrep = Rrep {
            dest,
            dest_seqno: 1,
            src: NodeId(0),
            hopcount: 1,
            reply_path_id: NodeId(4),
        };
        let actions = node.handle_rrep(&rrep, NodeId(4), &cfg, t(0.5));
        let seqs: Vec<u64> = actions
            .iter()
            .map(|a| match a {
                Action::ForwardData { packet, next_hop, .. } => {
                    assert_eq!(*next_hop, NodeId(4));
                    packet.seq
                }
                other => panic!("expected data out, got {other:?}"),
            })
            .collect();
        assert_eq!(seqs, vec![0, 1]);
        assert!(!node.has_pending_discovery(dest));
    }

    #[test]
    fn rrep_without_reverse_path_is_dropped() {
        let mut node = NodeState::new(NodeId(5));
        let cfg = cfg(ProtocolMode::Aomdv);
        let rrep = Rrep {
            dest: NodeId(9),
            dest_seqno: 1,
            src: NodeId(0),
            hopcount: 0,
            reply_path_id: NodeId(1),
        };
        let actions = node.handle_rrep(&rrep, NodeId(9), &cfg, t(0.5));
        assert!(matches!(
            actions.as_slice(),
            [Action::DropControl(ControlDrop::RrepNoReversePath)]
        ));
    }
}
