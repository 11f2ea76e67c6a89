//! Discrete-event core: virtual clock, deterministically ordered event
//! queue and seeded randomness.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::protocol::TimerKind;
use crate::traffic::FlowId;
use crate::NodeId;

/// Virtual time in seconds since the start of the run.
///
/// Always finite and non-negative; comparisons are exact since every
/// timestamp is produced by deterministic arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input: such a value is always a
    /// logic bug, never data.
    pub fn from_secs(secs: f64) -> SimTime {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "invalid simulation time: {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        // Finite by construction, so total_cmp agrees with numeric order.
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl Sub<SimTime> for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

/// What happens when an event fires.
///
/// Mobility is evaluated lazily from waypoint state, so the only mobility
/// event is the arrival at a waypoint (which doubles as the pause-end
/// update).
#[derive(Debug, Clone)]
pub enum EventAction {
    /// A packet transmission reaches `to`. `pr_w` is the received power
    /// computed at the sender's transmission, in watts.
    PacketDelivery {
        to: NodeId,
        from: NodeId,
        packet: crate::protocol::Packet,
        pr_w: f64,
    },
    /// A CBR source emits its next data packet.
    TrafficTick { flow: FlowId },
    /// A protocol timer fires on `node`.
    TimerExpiry { node: NodeId, timer: TimerKind },
    /// `node` reaches its current waypoint (or its initial pause ends).
    WaypointArrival { node: NodeId },
}

/// A scheduled simulation action. Dequeue order is `(fire_at, seq)`;
/// `seq` is the insertion order and breaks all timestamp ties.
#[derive(Debug)]
pub struct Event {
    pub fire_at: SimTime,
    pub seq: u64,
    pub action: EventAction,
}

struct HeapEntry(Event);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}
impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap of pending events keyed by `(fire_at, seq)`.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<HeapEntry>,
    next_seq: u64,
    clock: SimTime,
}

impl EventQueue {
    pub fn new() -> EventQueue {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: SimTime::ZERO,
        }
    }

    /// Current virtual time: the timestamp of the last dequeued event.
    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Schedules `action` at `at`, which must not lie in the past.
    ///
    /// Panics when `at < clock`: an event scheduled in the past means the
    /// caller has a logic bug, not a recoverable condition.
    pub fn schedule(&mut self, at: SimTime, action: EventAction) -> u64 {
        assert!(
            at >= self.clock,
            "event scheduled in the past: at={} clock={}",
            at,
            self.clock
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry(Event {
            fire_at: at,
            seq,
            action,
        }));
        seq
    }

    /// Removes and returns the next event with `fire_at <= until`,
    /// advancing the clock to its timestamp.
    pub fn pop_until(&mut self, until: SimTime) -> Option<Event> {
        match self.heap.peek() {
            Some(entry) if entry.0.fire_at <= until => {
                let ev = self.heap.pop().unwrap().0;
                debug_assert!(ev.fire_at >= self.clock, "clock moved backwards");
                self.clock = ev.fire_at;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Idles the clock forward to `until` once no more events are due.
    pub fn advance_clock(&mut self, until: SimTime) {
        if until > self.clock {
            self.clock = until;
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Deterministic per-run random stream.
///
/// Identical seed plus identical scenario config yields a bit-identical
/// event trace; ChaCha8 is stable across platforms and crate versions.
pub type SimRng = ChaCha8Rng;

/// Creates the run-global stream. Consumed in deterministic event order.
pub fn global_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(seed))
}

/// Creates the mobility stream for one node.
///
/// Sub-seeds are derived as `seed ^ hash(node_id)` so changing the node
/// count does not reshuffle the streams of unrelated nodes.
pub fn node_rng(seed: u64, node: NodeId) -> SimRng {
    SimRng::seed_from_u64(seed ^ splitmix64(0x6e6f_6465 ^ u64::from(node.index() as u32)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
