//! Random-waypoint movement inside the rectangular arena.
//!
//! Positions are never ticked on a grid. Each node carries a
//! [`WaypointState`] from which its exact position at any instant is
//! recomputed on demand; the only scheduled mobility event is the arrival
//! at the current waypoint.

use rand::Rng;

use crate::engine::{SimRng, SimTime};

/// A point inside the arena, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance_to(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Arena geometry and movement parameters.
#[derive(Debug, Clone)]
pub struct MobilityConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_time_s: f64,
}

impl MobilityConfig {
    fn random_position(&self, rng: &mut SimRng) -> Position {
        Position {
            x: rng.gen_range(0.0..=self.width_m),
            y: rng.gen_range(0.0..=self.height_m),
        }
    }

    fn random_speed(&self, rng: &mut SimRng) -> f64 {
        if self.speed_min_mps == self.speed_max_mps {
            self.speed_min_mps
        } else {
            rng.gen_range(self.speed_min_mps..=self.speed_max_mps)
        }
    }
}

/// Kinematic state of one node.
///
/// `pos` is the position at the moment the current leg was assigned;
/// motion toward `dest` begins at `depart_at` (equal to the assignment
/// time unless the node is pausing).
#[derive(Debug, Clone)]
pub struct WaypointState {
    pub pos: Position,
    pub dest: Position,
    pub speed_mps: f64,
    pub depart_at: SimTime,
    pub paused_until: Option<SimTime>,
}

impl WaypointState {
    /// A node pinned at `pos` until its first waypoint-arrival event,
    /// used for scenarios with explicit placements.
    pub fn pinned(pos: Position) -> WaypointState {
        WaypointState {
            pos,
            dest: pos,
            speed_mps: 1.0,
            depart_at: SimTime::ZERO,
            paused_until: None,
        }
    }

    fn travel_time(&self) -> f64 {
        self.pos.distance_to(self.dest) / self.speed_mps
    }

    /// When this leg's waypoint-arrival event should fire.
    pub fn arrival_time(&self) -> SimTime {
        self.depart_at + self.travel_time()
    }
}

/// Draws `n` independent initial states: position i.i.d. uniform over the
/// arena, plus a first waypoint and speed. Node `i` consumes only
/// `rngs[i]`, so placements are stable under node-count changes.
pub fn init_positions(rngs: &mut [SimRng], config: &MobilityConfig) -> Vec<WaypointState> {
    rngs.iter_mut()
        .map(|rng| {
            let pos = config.random_position(rng);
            let dest = config.random_position(rng);
            let speed_mps = config.random_speed(rng);
            WaypointState {
                pos,
                dest,
                speed_mps,
                depart_at: SimTime::ZERO,
                paused_until: None,
            }
        })
        .collect()
}

/// Exact position at time `t`: constant while pausing, linear along the
/// segment once moving, clamped at the destination on arrival.
pub fn position_at(state: &WaypointState, t: SimTime) -> Position {
    if t <= state.depart_at {
        return state.pos;
    }
    let dist = state.pos.distance_to(state.dest);
    if dist == 0.0 {
        return state.pos;
    }
    let traveled = state.speed_mps * (t - state.depart_at);
    if traveled >= dist {
        return state.dest;
    }
    let frac = traveled / dist;
    Position {
        x: state.pos.x + (state.dest.x - state.pos.x) * frac,
        y: state.pos.y + (state.dest.y - state.pos.y) * frac,
    }
}

/// Handles arrival at the current waypoint: pause for `pause_time_s`,
/// then head for a fresh uniform destination at a fresh uniform speed.
/// Returns the time of the next arrival event.
pub fn on_waypoint_arrival(
    state: &mut WaypointState,
    rng: &mut SimRng,
    config: &MobilityConfig,
    now: SimTime,
) -> SimTime {
    let here = position_at(state, now);
    let depart_at = now + config.pause_time_s;
    *state = WaypointState {
        pos: here,
        dest: config.random_position(rng),
        speed_mps: config.random_speed(rng),
        depart_at,
        paused_until: (config.pause_time_s > 0.0).then_some(depart_at),
    };
    state.arrival_time()
}
