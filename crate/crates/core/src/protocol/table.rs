//! The multipath route table and its update rule.
//!
//! Loop freedom rests on two commitments: the advertised hopcount of an
//! entry is never raised while its sequence number is unchanged, and a
//! path is only added when its hopcount does not exceed the advertised
//! hopcount. Node-disjointness rests on first hops being pairwise
//! distinct within an entry.

use crate::engine::SimTime;
use crate::NodeId;

/// One loop-free path toward a destination.
#[derive(Debug, Clone, Copy)]
pub struct PathEntry {
    pub next_hop: NodeId,
    /// The neighbor of the route's source on this path.
    pub first_hop: NodeId,
    pub hopcount: u32,
    pub expires_at: SimTime,
}

/// Per-destination multipath routing state.
#[derive(Debug, Clone)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub seqno: u64,
    pub advertised_hopcount: u32,
    pub paths: Vec<PathEntry>,
}

/// A candidate path presented to the update rule.
#[derive(Debug, Clone, Copy)]
pub struct OfferedPath {
    pub seqno: u64,
    pub hopcount: u32,
    pub next_hop: NodeId,
    pub first_hop: NodeId,
}

/// Outcome of applying the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// Fresher sequence number: the entry was replaced wholesale.
    Replaced,
    /// Same sequence number, new disjoint path within the advertised
    /// hopcount: added alongside the existing paths.
    Added,
    Rejected,
}

impl RouteEntry {
    fn fresh(destination: NodeId, offered: OfferedPath, expires_at: SimTime) -> RouteEntry {
        RouteEntry {
            destination,
            seqno: offered.seqno,
            advertised_hopcount: offered.hopcount,
            paths: vec![PathEntry {
                next_hop: offered.next_hop,
                first_hop: offered.first_hop,
                hopcount: offered.hopcount,
                expires_at,
            }],
        }
    }

    /// Drops paths that expired at or before `now`.
    pub fn prune_expired(&mut self, now: SimTime) {
        self.paths.retain(|p| p.expires_at > now);
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn debug_check(&self) {
        debug_assert!(
            self.paths
                .iter()
                .all(|p| p.hopcount >= 1 && p.hopcount <= self.advertised_hopcount),
            "hopcount exceeds advertised hopcount"
        );
        debug_assert!(
            {
                let mut hops: Vec<NodeId> = self.paths.iter().map(|p| p.first_hop).collect();
                hops.sort_unstable();
                hops.windows(2).all(|w| w[0] != w[1])
            },
            "first hops not pairwise distinct"
        );
    }
}

/// Applies the route update rule to `entry` (or installs a fresh entry
/// through `None`). A fresher sequence number replaces everything; an
/// equal sequence number adds a path only when its first hop is new and
/// its hopcount stays within the advertised hopcount; a stale sequence
/// number is rejected. Expired paths are pruned first so a dead path
/// never blocks its own replacement.
pub fn route_update_rule(
    entry: &mut Option<RouteEntry>,
    destination: NodeId,
    offered: OfferedPath,
    lifetime_s: f64,
    now: SimTime,
) -> UpdateOutcome {
    debug_assert!(offered.hopcount >= 1, "offered hopcount must be positive");
    let expires_at = now + lifetime_s;

    let Some(existing) = entry.as_mut() else {
        *entry = Some(RouteEntry::fresh(destination, offered, expires_at));
        entry.as_ref().unwrap().debug_check();
        return UpdateOutcome::Replaced;
    };

    existing.prune_expired(now);
    if existing.is_empty() && offered.seqno >= existing.seqno {
        // All paths timed out; the offer restarts the entry even at the
        // same sequence number, but the advertised-hopcount commitment
        // still holds while the seqno is unchanged.
        if offered.seqno == existing.seqno && offered.hopcount > existing.advertised_hopcount {
            return UpdateOutcome::Rejected;
        }
        let advertised = if offered.seqno == existing.seqno {
            existing.advertised_hopcount
        } else {
            offered.hopcount
        };
        *existing = RouteEntry::fresh(destination, offered, expires_at);
        existing.advertised_hopcount = advertised;
        existing.debug_check();
        return UpdateOutcome::Replaced;
    }

    if offered.seqno > existing.seqno {
        *existing = RouteEntry::fresh(destination, offered, expires_at);
        existing.debug_check();
        UpdateOutcome::Replaced
    } else if offered.seqno == existing.seqno {
        let disjoint = existing.paths.iter().all(|p| p.first_hop != offered.first_hop);
        if disjoint && offered.hopcount <= existing.advertised_hopcount {
            existing.paths.push(PathEntry {
                next_hop: offered.next_hop,
                first_hop: offered.first_hop,
                hopcount: offered.hopcount,
                expires_at,
            });
            existing.debug_check();
            UpdateOutcome::Added
        } else {
            UpdateOutcome::Rejected
        }
    } else {
        UpdateOutcome::Rejected
    }
}
