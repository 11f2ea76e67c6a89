//! The simulation world: nodes, radio, traffic and the event loop, built
//! from one [`ScenarioConfig`] and driven to a [`MetricsLedger`].
//!
//! A run is single-threaded and consumes randomness in deterministic
//! event order. Handlers mutate only the node an event targets; all
//! fan-out happens through scheduled deliveries, so parallel sweeps can
//! run Worlds side by side without sharing anything.

use std::collections::VecDeque;

use rand::Rng;

use crate::engine::{global_rng, node_rng, EventAction, EventQueue, SimRng, SimTime};
use crate::mobility::{self, MobilityConfig, Position, WaypointState};
use crate::protocol::{
    Action, ControlDrop, ControlPacket, DataDropReason, NodeState, Packet, PathEntry,
    ProtocolConfig, RouteEntry, TimerKind,
};
use crate::radio::{calibrate_thresholds, RadioParams, Transmission};
use crate::scenario::ScenarioConfig;
use crate::trace::TraceSink;
use crate::traffic::{cbr_tick, CbrFlow, FlowId, MetricsLedger};
use crate::NodeId;

macro_rules! trace_ev {
    ($world:expr, $t:expr, $node:expr, $kind:expr) => {
        if let Some(sink) = $world.trace.as_mut() {
            sink.event($t, $node, $kind, "");
        }
    };
    ($world:expr, $t:expr, $node:expr, $kind:expr, $($fmt:tt)*) => {
        if let Some(sink) = $world.trace.as_mut() {
            sink.event($t, $node, $kind, &format!($($fmt)*));
        }
    };
}

struct Node {
    mobility: WaypointState,
    rng: SimRng,
    routing: NodeState,
}

pub struct World {
    queue: EventQueue,
    rng: SimRng,
    nodes: Vec<Node>,
    flows: Vec<CbrFlow>,
    flow_next_seq: Vec<u64>,
    radio: RadioParams,
    mobility_cfg: MobilityConfig,
    protocol_cfg: ProtocolConfig,
    ledger: MetricsLedger,
    trace: Option<TraceSink>,
    validate: bool,
    loop_checks: u64,
    duration: SimTime,
}

impl World {
    /// Builds a world from a validated config. Panics on an invalid one;
    /// parse-time validation is the supported path.
    pub fn new(config: &ScenarioConfig) -> World {
        config.validate().expect("scenario config must be valid");

        let mut radio = RadioParams {
            tx_power_w: config.tx_power_w,
            gain_tx: config.antenna_gain,
            gain_rx: config.antenna_gain,
            wavelength_m: config.wavelength_m,
            system_loss: config.system_loss,
            rx_threshold_w: 0.0,
            warn_threshold_w: 0.0,
            bitrate_bps: config.bitrate_bps,
            jitter_max_s: config.jitter_max_s,
        };
        let (rx, warn) = calibrate_thresholds(config.range_m, config.warn_fraction, &radio);
        radio.rx_threshold_w = rx;
        radio.warn_threshold_w = warn;

        let mobility_cfg = MobilityConfig {
            width_m: config.area_width_m,
            height_m: config.area_height_m,
            speed_min_mps: config.speed_min_mps,
            speed_max_mps: config.speed_max_mps,
            pause_time_s: config.pause_time_s,
        };
        let protocol_cfg = ProtocolConfig {
            mode: config.protocol,
            warn_threshold_w: warn,
            route_lifetime_s: config.route_lifetime_s,
            blacklist_ttl_s: config.blacklist_ttl_s,
            discovery_timeout_s: config.discovery_timeout_s,
            discovery_attempts: config.discovery_attempts,
            buffer_cap: config.buffer_cap as usize,
        };

        let mut rng = global_rng(config.seed);
        let mut queue = EventQueue::new();

        let n = config.nodes as usize;
        let mut node_rngs: Vec<SimRng> = (0..n)
            .map(|i| node_rng(config.seed, NodeId(i as u32)))
            .collect();
        let states: Vec<WaypointState> = if config.positions.is_empty() {
            mobility::init_positions(&mut node_rngs, &mobility_cfg)
        } else {
            config
                .positions
                .iter()
                .map(|&(x, y)| WaypointState::pinned(Position { x, y }))
                .collect()
        };

        let mut nodes = Vec::with_capacity(n);
        for (i, (state, node_rng)) in states.into_iter().zip(node_rngs).enumerate() {
            let id = NodeId(i as u32);
            queue.schedule(state.arrival_time(), EventAction::WaypointArrival { node: id });
            nodes.push(Node {
                mobility: state,
                rng: node_rng,
                routing: NodeState::new(id),
            });
        }

        let flows = build_flows(config, &mut rng);
        let flow_next_seq = vec![0u64; flows.len()];
        for flow in &flows {
            queue.schedule(flow.start_at, EventAction::TrafficTick { flow: flow.id });
        }

        World {
            queue,
            rng,
            nodes,
            flows,
            flow_next_seq,
            radio,
            mobility_cfg,
            protocol_cfg,
            ledger: MetricsLedger::default(),
            trace: None,
            // Invariants are checked wherever debug assertions run
            // (tests); release sweeps skip the cost unless asked.
            validate: cfg!(debug_assertions),
            loop_checks: 0,
            duration: SimTime::from_secs(config.duration_s),
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(TraceSink::new());
    }

    pub fn take_trace(&mut self) -> Option<String> {
        self.trace.take().map(TraceSink::into_string)
    }

    /// Toggles the per-mutation loop-freedom check.
    pub fn set_validation(&mut self, on: bool) {
        self.validate = on;
    }

    /// How many per-destination loop-freedom checks have run.
    pub fn loop_checks(&self) -> u64 {
        self.loop_checks
    }

    pub fn clock(&self) -> SimTime {
        self.queue.clock()
    }

    pub fn duration(&self) -> SimTime {
        self.duration
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> MetricsLedger {
        self.ledger
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn radio_params(&self) -> &RadioParams {
        &self.radio
    }

    pub fn route_entry(&self, node: NodeId, dest: NodeId) -> Option<&RouteEntry> {
        self.nodes[node.index()].routing.route_entry(dest)
    }

    pub fn peek_route(&self, node: NodeId, dest: NodeId) -> Option<PathEntry> {
        self.nodes[node.index()].routing.peek_route(dest, self.clock())
    }

    pub fn position_of(&self, node: NodeId, t: SimTime) -> Position {
        mobility::position_at(&self.nodes[node.index()].mobility, t)
    }

    /// Processes every event due at or before `until`, then idles the
    /// clock forward so it lands exactly on `until`.
    pub fn run_until(&mut self, until: SimTime) {
        while let Some(event) = self.queue.pop_until(until) {
            self.dispatch(event);
        }
        self.queue.advance_clock(until);
    }

    /// Runs the whole configured duration and finalizes the ledger.
    pub fn run_to_end(&mut self) -> &MetricsLedger {
        let end = self.duration;
        self.run_until(end);
        &self.ledger
    }

    fn dispatch(&mut self, event: crate::engine::Event) {
        let now = event.fire_at;
        match event.action {
            EventAction::WaypointArrival { node } => {
                let entry = &mut self.nodes[node.index()];
                let next = mobility::on_waypoint_arrival(
                    &mut entry.mobility,
                    &mut entry.rng,
                    &self.mobility_cfg,
                    now,
                );
                self.queue
                    .schedule(next, EventAction::WaypointArrival { node });
            }
            EventAction::TrafficTick { flow } => {
                let f = self.flows[flow.0 as usize].clone();
                let seq = self.flow_next_seq[flow.0 as usize];
                if let Some((packet, next)) = cbr_tick(&f, seq, now) {
                    self.flow_next_seq[flow.0 as usize] += 1;
                    self.ledger.record_generated();
                    if next < f.stop_at {
                        self.queue.schedule(next, EventAction::TrafficTick { flow });
                    }
                    trace_ev!(self, now, f.src, "data_gen", "flow={} seq={}", flow.0, packet.seq);
                    let actions = self.nodes[f.src.index()].routing.send_data(
                        packet,
                        f.dest,
                        &self.protocol_cfg,
                        now,
                    );
                    self.execute(f.src, actions, now);
                    self.after_mutations(f.src, now);
                }
            }
            EventAction::TimerExpiry { node, timer } => {
                let actions = match timer {
                    TimerKind::DiscoveryTimeout { dest, attempt } => self.nodes[node.index()]
                        .routing
                        .handle_discovery_timeout(dest, attempt, &self.protocol_cfg, now),
                };
                self.execute(node, actions, now);
                self.after_mutations(node, now);
            }
            EventAction::PacketDelivery {
                to,
                from,
                packet,
                pr_w,
            } => {
                self.on_delivery(to, from, packet, pr_w, now);
                self.after_mutations(to, now);
            }
        }
    }

    fn on_delivery(&mut self, to: NodeId, from: NodeId, packet: Packet, pr_w: f64, now: SimTime) {
        match packet {
            Packet::Data(pkt) => {
                let dest = self.flows[pkt.flow.0 as usize].dest;
                if dest == to {
                    self.ledger.record_delivery(&pkt, now);
                    trace_ev!(
                        self,
                        now,
                        to,
                        "data_delivered",
                        "flow={} seq={} from={} delay={:.9}",
                        pkt.flow.0,
                        pkt.seq,
                        from,
                        now - pkt.generated_at
                    );
                } else {
                    let actions =
                        self.nodes[to.index()]
                            .routing
                            .send_data(pkt, dest, &self.protocol_cfg, now);
                    self.execute(to, actions, now);
                }
            }
            Packet::Control(control) => {
                let actions = match &control {
                    ControlPacket::Rreq(r) => {
                        trace_ev!(
                            self,
                            now,
                            to,
                            "rreq_rx",
                            "from={} src={} bid={} dest={} hc={} pr={:.6e}",
                            from,
                            r.src,
                            r.broadcast_id,
                            r.dest,
                            r.hopcount,
                            pr_w
                        );
                        self.nodes[to.index()]
                            .routing
                            .handle_rreq(r, pr_w, from, &self.protocol_cfg, now)
                    }
                    ControlPacket::Rrep(r) => {
                        trace_ev!(
                            self,
                            now,
                            to,
                            "rrep_rx",
                            "from={} dest={} src={} hc={}",
                            from,
                            r.dest,
                            r.src,
                            r.hopcount
                        );
                        self.nodes[to.index()]
                            .routing
                            .handle_rrep(r, from, &self.protocol_cfg, now)
                    }
                    ControlPacket::Rerr(r) => {
                        trace_ev!(
                            self,
                            now,
                            to,
                            "rerr_rx",
                            "from={} n={}",
                            from,
                            r.unreachable.len()
                        );
                        self.nodes[to.index()]
                            .routing
                            .handle_rerr(r, from, &self.protocol_cfg, now)
                    }
                    ControlPacket::Wrng(w) => {
                        trace_ev!(self, now, to, "wrng_rx", "from={} weak={}", from, w.weak_node);
                        self.nodes[to.index()]
                            .routing
                            .handle_wrng(w, &self.protocol_cfg, now)
                    }
                };
                self.execute(to, actions, now);
            }
        }
    }

    /// Executes protocol actions for `origin`, chaining the follow-ups a
    /// failed unicast produces (link-break handling may re-route, buffer
    /// or flood) until the work queue drains.
    fn execute(&mut self, origin: NodeId, actions: Vec<Action>, now: SimTime) {
        let mut work: VecDeque<Action> = actions.into();
        while let Some(action) = work.pop_front() {
            match action {
                Action::Broadcast(packet) => self.do_broadcast(origin, packet, now),
                Action::Unicast { next_hop, packet } => {
                    if let Some(chain) = self.do_control_unicast(origin, next_hop, packet, now) {
                        work.extend(chain);
                    }
                }
                Action::ForwardData {
                    next_hop,
                    packet,
                    dest,
                } => {
                    if let Some(chain) = self.do_data_unicast(origin, next_hop, packet, dest, now)
                    {
                        work.extend(chain);
                    }
                }
                Action::StartTimer { timer, delay_s } => {
                    self.queue
                        .schedule(now + delay_s, EventAction::TimerExpiry { node: origin, timer });
                }
                Action::DropData { packet, reason } => {
                    let reason_str = match reason {
                        DataDropReason::BufferFull => {
                            self.ledger.data_dropped_buffer += 1;
                            "buffer_full"
                        }
                        DataDropReason::RetriesExhausted => {
                            self.ledger.data_dropped_no_route += 1;
                            "retries_exhausted"
                        }
                    };
                    trace_ev!(
                        self,
                        now,
                        origin,
                        "data_drop",
                        "flow={} seq={} reason={}",
                        packet.flow.0,
                        packet.seq,
                        reason_str
                    );
                }
                Action::DropControl(drop) => match drop {
                    ControlDrop::RrepNoReversePath => {
                        self.ledger.rrep_dropped_no_reverse += 1;
                        trace_ev!(self, now, origin, "rrep_drop");
                    }
                    ControlDrop::WrngUnexpectedMode => {
                        self.ledger.anomalies += 1;
                        trace_ev!(self, now, origin, "wrng_anomaly");
                    }
                },
            }
        }
    }

    fn do_broadcast(&mut self, origin: NodeId, packet: ControlPacket, now: SimTime) {
        self.ledger.record_routing_tx();
        match &packet {
            ControlPacket::Rreq(r) => {
                if r.src == origin {
                    self.ledger.discoveries_initiated += 1;
                }
                trace_ev!(
                    self,
                    now,
                    origin,
                    "rreq_tx",
                    "src={} bid={} dest={} hc={}",
                    r.src,
                    r.broadcast_id,
                    r.dest,
                    r.hopcount
                );
            }
            ControlPacket::Rerr(r) => {
                self.ledger.rerr_sent += 1;
                trace_ev!(self, now, origin, "rerr_tx", "n={}", r.unreachable.len());
            }
            other => debug_assert!(false, "{} is never broadcast", other.kind()),
        }
        let tx = Transmission {
            sender: origin,
            sender_pos: self.position_of(origin, now),
            sent_at: now,
            size_bytes: packet.size_bytes(),
        };
        let receivers = self.neighbor_positions(origin, now);
        let planned = self.radio.plan_broadcast(&tx, &receivers, &mut self.rng);
        for delivery in planned {
            self.queue.schedule(
                delivery.deliver_at,
                EventAction::PacketDelivery {
                    to: delivery.to,
                    from: origin,
                    packet: Packet::Control(packet.clone()),
                    pr_w: delivery.pr_w,
                },
            );
        }
    }

    fn do_control_unicast(
        &mut self,
        origin: NodeId,
        next_hop: NodeId,
        packet: ControlPacket,
        now: SimTime,
    ) -> Option<Vec<Action>> {
        assert!(
            next_hop.index() < self.nodes.len(),
            "unicast to unknown node {next_hop}"
        );
        self.ledger.record_routing_tx();
        match &packet {
            ControlPacket::Rrep(r) => {
                trace_ev!(
                    self,
                    now,
                    origin,
                    "rrep_tx",
                    "next={} dest={} src={} hc={} path={}",
                    next_hop,
                    r.dest,
                    r.src,
                    r.hopcount,
                    r.reply_path_id
                );
            }
            ControlPacket::Wrng(w) => {
                self.ledger.wrng_sent += 1;
                trace_ev!(
                    self,
                    now,
                    origin,
                    "wrng_tx",
                    "next={} weak={} src={} bid={}",
                    next_hop,
                    w.weak_node,
                    w.rreq_src,
                    w.broadcast_id
                );
            }
            other => debug_assert!(false, "{} is never unicast", other.kind()),
        }
        let tx = Transmission {
            sender: origin,
            sender_pos: self.position_of(origin, now),
            sent_at: now,
            size_bytes: packet.size_bytes(),
        };
        match self
            .radio
            .plan_unicast(&tx, next_hop, self.position_of(next_hop, now))
        {
            Ok(delivery) => {
                self.queue.schedule(
                    delivery.deliver_at,
                    EventAction::PacketDelivery {
                        to: next_hop,
                        from: origin,
                        packet: Packet::Control(packet),
                        pr_w: delivery.pr_w,
                    },
                );
                None
            }
            Err(()) => {
                self.ledger.link_breaks += 1;
                trace_ev!(self, now, origin, "link_break", "peer={}", next_hop);
                Some(self.nodes[origin.index()].routing.handle_link_break(
                    next_hop,
                    None,
                    &self.protocol_cfg,
                    now,
                ))
            }
        }
    }

    fn do_data_unicast(
        &mut self,
        origin: NodeId,
        next_hop: NodeId,
        packet: crate::traffic::DataPacket,
        dest: NodeId,
        now: SimTime,
    ) -> Option<Vec<Action>> {
        assert!(
            next_hop.index() < self.nodes.len(),
            "unicast to unknown node {next_hop}"
        );
        trace_ev!(
            self,
            now,
            origin,
            "data_tx",
            "flow={} seq={} dest={} next={}",
            packet.flow.0,
            packet.seq,
            dest,
            next_hop
        );
        let tx = Transmission {
            sender: origin,
            sender_pos: self.position_of(origin, now),
            sent_at: now,
            size_bytes: packet.size_bytes,
        };
        match self
            .radio
            .plan_unicast(&tx, next_hop, self.position_of(next_hop, now))
        {
            Ok(delivery) => {
                self.queue.schedule(
                    delivery.deliver_at,
                    EventAction::PacketDelivery {
                        to: next_hop,
                        from: origin,
                        packet: Packet::Data(packet),
                        pr_w: delivery.pr_w,
                    },
                );
                None
            }
            Err(()) => {
                self.ledger.link_breaks += 1;
                trace_ev!(self, now, origin, "link_break", "peer={}", next_hop);
                Some(self.nodes[origin.index()].routing.handle_link_break(
                    next_hop,
                    Some((packet, dest)),
                    &self.protocol_cfg,
                    now,
                ))
            }
        }
    }

    fn neighbor_positions(&self, except: NodeId, t: SimTime) -> Vec<(NodeId, Position)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != except.index())
            .map(|(i, node)| (NodeId(i as u32), mobility::position_at(&node.mobility, t)))
            .collect()
    }

    /// Drains the dirty-destination log of the node an event ran on and,
    /// when validation is enabled, checks the per-destination next-hop
    /// graph for cycles.
    fn after_mutations(&mut self, node: NodeId, now: SimTime) {
        let mut dirty = self.nodes[node.index()].routing.take_dirty_dests();
        if !self.validate || dirty.is_empty() {
            return;
        }
        dirty.sort_unstable();
        dirty.dedup();
        for dest in dirty {
            self.assert_loop_free(dest, now);
        }
    }

    /// Panics if following next hops toward `dest` can revisit a node.
    fn assert_loop_free(&mut self, dest: NodeId, now: SimTime) {
        self.loop_checks += 1;
        let n = self.nodes.len();
        let mut next: Vec<Option<usize>> = vec![None; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if i == dest.index() {
                continue;
            }
            if let Some(path) = node.routing.peek_route(dest, now) {
                next[i] = Some(path.next_hop.index());
            }
        }
        let mut state = vec![0u8; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut walked = Vec::new();
            let mut current = start;
            loop {
                match state[current] {
                    1 => panic!(
                        "routing loop toward node {} at t={}: walk {:?} revisits {}",
                        dest, now, walked, current
                    ),
                    2 => break,
                    _ => {}
                }
                state[current] = 1;
                walked.push(current);
                match next[current] {
                    Some(hop) => current = hop,
                    None => break,
                }
            }
            for &i in &walked {
                state[i] = 2;
            }
        }
    }
}

fn build_flows(config: &ScenarioConfig, rng: &mut SimRng) -> Vec<CbrFlow> {
    let start_at = SimTime::from_secs(config.cbr_start_s);
    let stop_at = SimTime::from_secs(config.cbr_stop_s.unwrap_or(config.duration_s));
    let interval_s = 1.0 / config.cbr_rate_pps;

    let endpoints: Vec<(u32, u32)> = if !config.cbr_pairs.is_empty() {
        config.cbr_pairs.clone()
    } else if config.nodes >= 2 {
        let mut drawn: Vec<(u32, u32)> = Vec::new();
        for _ in 0..config.cbr_flows {
            let mut pick = (0, 0);
            // Prefer unseen pairs; tiny topologies may repeat.
            for _ in 0..100 {
                let src = rng.gen_range(0..config.nodes);
                let mut dest = rng.gen_range(0..config.nodes);
                while dest == src {
                    dest = rng.gen_range(0..config.nodes);
                }
                pick = (src, dest);
                if !drawn.contains(&pick) {
                    break;
                }
            }
            drawn.push(pick);
        }
        drawn
    } else {
        Vec::new()
    };

    endpoints
        .into_iter()
        .enumerate()
        .map(|(i, (src, dest))| CbrFlow {
            id: FlowId(i as u32),
            src: NodeId(src),
            dest: NodeId(dest),
            packet_size_bytes: config.cbr_packet_size_b as usize,
            interval_s,
            start_at,
            stop_at,
        })
        .collect()
}
