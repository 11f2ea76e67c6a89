//! Free-space (Friis) propagation and the ideal-channel link model.
//!
//! The channel has no contention, collisions or capture. A transmission
//! reaches every node whose received power clears `rx_threshold_w`;
//! per-hop latency is transmission time plus propagation time, with a
//! small uniform jitter on broadcasts to de-synchronize flooding.

use rand::Rng;

use crate::engine::{SimRng, SimTime};
use crate::mobility::Position;
use crate::NodeId;

/// Speed of light, m/s.
const LIGHT_SPEED_MPS: f64 = 299_792_458.0;

/// Friis near-field clamp: distances below 1 m are treated as 1 m.
const MIN_DISTANCE_M: f64 = 1.0;

/// Physical-layer parameters shared by all nodes.
///
/// The defaults model a 914 MHz WaveLAN-class radio; thresholds are
/// derived from the configured range via [`calibrate_thresholds`] rather
/// than set directly.
#[derive(Debug, Clone)]
pub struct RadioParams {
    pub tx_power_w: f64,
    pub gain_tx: f64,
    pub gain_rx: f64,
    pub wavelength_m: f64,
    pub system_loss: f64,
    /// Minimum received power for successful reception, watts.
    pub rx_threshold_w: f64,
    /// Prediction cutoff for the preemptive link-failure rule, watts.
    /// Always >= `rx_threshold_w`.
    pub warn_threshold_w: f64,
    pub bitrate_bps: f64,
    /// Broadcast deliveries get an extra U[0, jitter_max_s) delay.
    pub jitter_max_s: f64,
}

impl Default for RadioParams {
    fn default() -> RadioParams {
        let mut params = RadioParams {
            tx_power_w: 0.28183815,
            gain_tx: 1.0,
            gain_rx: 1.0,
            wavelength_m: 0.328,
            system_loss: 1.0,
            rx_threshold_w: 0.0,
            warn_threshold_w: 0.0,
            bitrate_bps: 2.0e6,
            jitter_max_s: 1.0e-3,
        };
        let (rx, warn) = calibrate_thresholds(250.0, 0.9, &params);
        params.rx_threshold_w = rx;
        params.warn_threshold_w = warn;
        params
    }
}

/// Received power in watts at `rx_pos` for a transmitter at `tx_pos`:
/// `Pt * Gt * Gr * lambda^2 / ((4 pi)^2 * d^2 * L)`, with the distance
/// clamped at 1 m to avoid the near-field singularity.
pub fn received_power(tx_pos: Position, rx_pos: Position, params: &RadioParams) -> f64 {
    let d = tx_pos.distance_to(rx_pos).max(MIN_DISTANCE_M);
    let numerator =
        params.tx_power_w * params.gain_tx * params.gain_rx * params.wavelength_m.powi(2);
    let four_pi_d = 4.0 * std::f64::consts::PI * d;
    numerator / (four_pi_d * four_pi_d * params.system_loss)
}

/// Derives `(rx_threshold, warn_threshold)` from a target reception range
/// and a warn fraction: reception is calibrated to exactly `range_m`,
/// prediction to `warn_fraction * range_m`. `warn_fraction = 1.0` makes
/// the two thresholds equal, disabling the prediction rule.
pub fn calibrate_thresholds(range_m: f64, warn_fraction: f64, params: &RadioParams) -> (f64, f64) {
    assert!(range_m > MIN_DISTANCE_M, "range must exceed 1 m");
    assert!(
        warn_fraction > 0.0 && warn_fraction <= 1.0,
        "warn_fraction must lie in (0, 1]"
    );
    let at = |d: f64| {
        received_power(
            Position { x: 0.0, y: 0.0 },
            Position { x: d, y: 0.0 },
            params,
        )
    };
    (at(range_m), at(warn_fraction * range_m))
}

/// A planned hand-off of one packet to one receiver.
#[derive(Debug, Clone, Copy)]
pub struct PlannedDelivery {
    pub to: NodeId,
    pub deliver_at: SimTime,
    pub pr_w: f64,
}

/// The sender's side of a transmission. The position is a snapshot taken
/// at send time; mobility is evaluated lazily.
#[derive(Debug, Clone, Copy)]
pub struct Transmission {
    pub sender: NodeId,
    pub sender_pos: Position,
    pub sent_at: SimTime,
    pub size_bytes: usize,
}

impl RadioParams {
    pub fn tx_delay_s(&self, size_bytes: usize) -> f64 {
        (size_bytes as f64) * 8.0 / self.bitrate_bps
    }

    fn propagation_delay_s(&self, distance_m: f64) -> f64 {
        distance_m / LIGHT_SPEED_MPS
    }

    /// Plans deliveries for a broadcast: every listed receiver whose
    /// received power clears `rx_threshold_w` (boundary inclusive) gets a
    /// delivery at `sent_at + tx_delay + propagation + jitter`. Receivers
    /// must be listed in ascending node order so jitter draws are
    /// deterministic.
    pub fn plan_broadcast(
        &self,
        tx: &Transmission,
        receivers: &[(NodeId, Position)],
        rng: &mut SimRng,
    ) -> Vec<PlannedDelivery> {
        let tx_delay = self.tx_delay_s(tx.size_bytes);
        let mut planned = Vec::new();
        for &(id, pos) in receivers {
            debug_assert!(id != tx.sender, "sender cannot receive its own broadcast");
            let pr = received_power(tx.sender_pos, pos, self);
            if pr < self.rx_threshold_w {
                continue;
            }
            let jitter = if self.jitter_max_s > 0.0 {
                rng.gen_range(0.0..self.jitter_max_s)
            } else {
                0.0
            };
            let dist = tx.sender_pos.distance_to(pos);
            planned.push(PlannedDelivery {
                to: id,
                deliver_at: tx.sent_at + (tx_delay + self.propagation_delay_s(dist) + jitter),
                pr_w: pr,
            });
        }
        planned
    }

    /// Plans a unicast to `next_hop`. `Err(())` means the link is broken:
    /// the receiver has moved beyond reception range, which the caller
    /// must surface to the sender's protocol layer as link-layer feedback.
    pub fn plan_unicast(
        &self,
        tx: &Transmission,
        next_hop: NodeId,
        next_hop_pos: Position,
    ) -> Result<PlannedDelivery, ()> {
        let pr = received_power(tx.sender_pos, next_hop_pos, self);
        if pr < self.rx_threshold_w {
            return Err(());
        }
        let dist = tx.sender_pos.distance_to(next_hop_pos);
        let delay = self.tx_delay_s(tx.size_bytes) + self.propagation_delay_s(dist);
        Ok(PlannedDelivery {
            to: next_hop,
            deliver_at: tx.sent_at + delay,
            pr_w: pr,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::global_rng;
    use proptest::prelude::*;

    fn at(x: f64) -> Position {
        Position { x, y: 0.0 }
    }

    /// Independent evaluation of the Friis equation, written as the
    /// aperture form Pr = Pt*Gt*Gr * (lambda / (4*pi*d))^2 / L so that it
    /// does not share the implementation's arithmetic path.
    fn friis_oracle(d_m: f64, params: &RadioParams) -> f64 {
        let d = if d_m < 1.0 { 1.0 } else { d_m };
        let term = params.wavelength_m / (4.0 * std::f64::consts::PI * d);
        params.tx_power_w * params.gain_tx * params.gain_rx * term * term / params.system_loss
    }

    #[test]
    fn matches_independent_oracle() {
        let params = RadioParams::default();
        for d in [1.0, 100.0, 225.0, 250.0, 500.0] {
            let got = received_power(at(0.0), at(d), &params);
            let want = friis_oracle(d, &params);
            assert!(
                (got - want).abs() <= 1e-12 * want,
                "d={d}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn reference_value_at_250m() {
        // WaveLAN-era constants: Pt=0.28183815 W, Gt=Gr=L=1, lambda=0.328 m.
        let params = RadioParams::default();
        let pr = received_power(at(0.0), at(250.0), &params);
        assert!(
            (pr - 3.072e-9).abs() < 0.001e-9,
            "expected ~3.072e-9 W, got {pr:e}"
        );
    }

    #[test]
    fn doubling_distance_quarters_power() {
        let params = RadioParams::default();
        for d in [1.0, 10.0, 125.0, 250.0, 1000.0] {
            let near = received_power(at(0.0), at(d), &params);
            let far = received_power(at(0.0), at(2.0 * d), &params);
            assert!(
                (near / far - 4.0).abs() <= 1e-12 * 4.0,
                "d={d}: ratio {}",
                near / far
            );
        }
    }

    #[test]
    fn coincident_nodes_clamp_to_one_meter() {
        let params = RadioParams::default();
        let same = received_power(at(5.0), at(5.0), &params);
        let one = received_power(at(0.0), at(1.0), &params);
        assert_eq!(same, one);
    }

    #[test]
    fn calibration_ratio_follows_inverse_square() {
        let params = RadioParams::default();
        let (rx, warn) = calibrate_thresholds(250.0, 0.9, &params);
        let want_ratio = (250.0f64 / 225.0).powi(2);
        assert!((warn / rx - want_ratio).abs() < 1e-12 * want_ratio);
        assert!(warn >= rx);
        assert!((rx - 3.072e-9).abs() < 0.001e-9);
    }

    #[test]
    fn degenerate_warn_fraction_equalizes_thresholds() {
        let params = RadioParams::default();
        let (rx, warn) = calibrate_thresholds(250.0, 1.0, &params);
        assert_eq!(rx, warn);
    }

    #[test]
    fn broadcast_reaches_only_in_range_receivers() {
        let params = RadioParams::default();
        let tx = Transmission {
            sender: NodeId(0),
            sender_pos: at(0.0),
            sent_at: SimTime::ZERO,
            size_bytes: 48,
        };
        let receivers = vec![
            (NodeId(1), at(200.0)),
            (NodeId(2), at(300.0)),
            (NodeId(3), at(250.0)),
        ];
        let mut rng = global_rng(9);
        let planned = params.plan_broadcast(&tx, &receivers, &mut rng);
        let ids: Vec<u32> = planned.iter().map(|p| p.to.0).collect();
        // 200 m is inside, 300 m outside; 250 m sits exactly on the
        // calibration distance and the boundary is inclusive.
        assert_eq!(ids, vec![1, 3]);
        for p in &planned {
            assert!(p.pr_w >= params.rx_threshold_w);
            assert!(p.deliver_at > tx.sent_at);
        }
    }

    #[test]
    fn broadcast_with_no_receivers_plans_nothing() {
        let params = RadioParams::default();
        let tx = Transmission {
            sender: NodeId(0),
            sender_pos: at(0.0),
            sent_at: SimTime::ZERO,
            size_bytes: 48,
        };
        let mut rng = global_rng(9);
        assert!(params.plan_broadcast(&tx, &[], &mut rng).is_empty());
    }

    #[test]
    fn unicast_out_of_range_reports_link_break() {
        let params = RadioParams::default();
        let tx = Transmission {
            sender: NodeId(0),
            sender_pos: at(0.0),
            sent_at: SimTime::from_secs(1.0),
            size_bytes: 512,
        };
        assert!(params.plan_unicast(&tx, NodeId(1), at(251.0)).is_err());
        let ok = params.plan_unicast(&tx, NodeId(1), at(250.0)).unwrap();
        assert!(ok.deliver_at > tx.sent_at);
        let min_delay = params.tx_delay_s(512);
        assert!(ok.deliver_at - tx.sent_at >= min_delay);
    }

    proptest! {
        #[test]
        fn monotone_decreasing_beyond_clamp(d1 in 1.0f64..5000.0, d2 in 1.0f64..5000.0) {
            prop_assume!(d1 < d2);
            let params = RadioParams::default();
            let p1 = received_power(at(0.0), at(d1), &params);
            let p2 = received_power(at(0.0), at(d2), &params);
            prop_assert!(p1 > p2);
        }

        #[test]
        fn symmetric_in_endpoints(ax in 0.0f64..1500.0, ay in 0.0f64..300.0,
                                  bx in 0.0f64..1500.0, by in 0.0f64..300.0) {
            let params = RadioParams::default();
            let a = Position { x: ax, y: ay };
            let b = Position { x: bx, y: by };
            prop_assert_eq!(
                received_power(a, b, &params).to_bits(),
                received_power(b, a, &params).to_bits()
            );
        }
    }
}
