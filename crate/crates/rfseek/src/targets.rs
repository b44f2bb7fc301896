//! Scalar target functions the seeker maximizes, evaluated from raw packet
//! samples. Single-node RSSI passes through unchanged; the bridging metric
//! `-|r1 - r2| - |r1 + r2|` peaks where signal to two nodes is equal and
//! maximal. Values are dB-scale arbitrary units once composed.

use serde::{Deserialize, Serialize};

use crate::rf_env::{RfEnvironment, Sample};
use crate::world::Position;

/// Which scalar field an episode optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    SingleSource { node: u32 },
    Bridge { node_a: u32, node_b: u32 },
}

impl TargetSpec {
    pub fn node_ids(&self) -> Vec<u32> {
        match *self {
            TargetSpec::SingleSource { node } => vec![node],
            TargetSpec::Bridge { node_a, node_b } => vec![node_a, node_b],
        }
    }

    /// Validation threshold matching the target's noise level.
    pub fn default_error_threshold(&self) -> f64 {
        match self {
            TargetSpec::SingleSource { .. } => 3.0,
            TargetSpec::Bridge { .. } => 7.0,
        }
    }
}

/// One target evaluation tied to a position and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSample {
    pub t: f64,
    pub position: Position,
    pub value: f64,
}

pub fn eval_single(r: f64) -> f64 {
    r
}

/// Bridging metric; maximal where both signals are equal and strong.
pub fn eval_bridge(r1: f64, r2: f64) -> f64 {
    -(r1 - r2).abs() - (r1 + r2).abs()
}

/// Turn a merged, time-sorted packet stream into target samples.
///
/// Single-source targets pass the node's samples through unpaired. Bridge
/// targets pair each node-a sample with the time-nearest node-b sample
/// within `window` seconds (earlier wins a tie) and evaluate the metric at
/// node-a's position and time; unpaired samples are dropped.
pub fn pair_samples(spec: &TargetSpec, samples: &[Sample], window: f64) -> Vec<TargetSample> {
    assert!(window > 0.0, "pairing window must be positive");
    match *spec {
        TargetSpec::SingleSource { node } => samples
            .iter()
            .filter(|s| s.node_id == node)
            .map(|s| TargetSample { t: s.t, position: s.position, value: eval_single(s.rssi) })
            .collect(),
        TargetSpec::Bridge { node_a, node_b } => {
            let a: Vec<&Sample> = samples.iter().filter(|s| s.node_id == node_a).collect();
            let b: Vec<&Sample> = samples.iter().filter(|s| s.node_id == node_b).collect();
            let mut out = Vec::with_capacity(a.len());
            let mut j = 0usize;
            for s in a {
                // First b-sample at or after s.t; candidates are it and its
                // predecessor.
                while j < b.len() && b[j].t < s.t {
                    j += 1;
                }
                let mut best: Option<&Sample> = None;
                if j > 0 {
                    best = Some(b[j - 1]);
                }
                if j < b.len() {
                    let ahead = b[j];
                    best = match best {
                        Some(behind) if (s.t - behind.t) <= (ahead.t - s.t) => Some(behind),
                        _ => Some(ahead),
                    };
                }
                if let Some(partner) = best {
                    if (partner.t - s.t).abs() <= window {
                        out.push(TargetSample {
                            t: s.t,
                            position: s.position,
                            value: eval_bridge(s.rssi, partner.rssi),
                        });
                    }
                }
            }
            out
        }
    }
}

/// Mean-field (noise-free) target value at a position; the evaluation-only
/// oracle for summaries and optional stop checks.
pub fn noiseless_target(env: &RfEnvironment, spec: &TargetSpec, p: Position) -> f64 {
    match *spec {
        TargetSpec::SingleSource { node } => eval_single(env.mean_rssi_by_id(node, p)),
        TargetSpec::Bridge { node_a, node_b } => {
            eval_bridge(env.mean_rssi_by_id(node_a, p), env.mean_rssi_by_id(node_b, p))
        }
    }
}

/// Argmax of the noiseless target over candidate points; ties go to the
/// first point in iteration order.
pub fn noiseless_argmax(
    env: &RfEnvironment,
    spec: &TargetSpec,
    candidates: &[Position],
) -> Option<Position> {
    let mut best: Option<(Position, f64)> = None;
    for &p in candidates {
        let v = noiseless_target(env, spec, p);
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((p, v));
        }
    }
    best.map(|(p, _)| p)
}

/// The known true optimum used for evaluation only: the transmitter position
/// for single-source targets (the field peaks there, flat within the
/// reference distance), the noiseless argmax over the candidates otherwise.
pub fn optimum(env: &RfEnvironment, spec: &TargetSpec, candidates: &[Position]) -> Option<Position> {
    match *spec {
        TargetSpec::SingleSource { node } => env.node(node).map(|n| n.position()),
        TargetSpec::Bridge { .. } => noiseless_argmax(env, spec, candidates),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf_env::{PropagationConfig, TransmitterNode};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_is_identity_and_monotone() {
        assert_eq!(eval_single(-50.0), -50.0);
        assert_eq!(eval_single(-90.0), -90.0);
        assert!(eval_single(-40.0) > eval_single(-41.0));
    }

    #[test]
    fn bridge_examples() {
        assert_relative_eq!(eval_bridge(-50.0, -50.0), -100.0);
        assert_relative_eq!(eval_bridge(-40.0, -60.0), -120.0);
    }

    proptest! {
        #[test]
        fn bridge_is_symmetric(a in -100.0f64..0.0, b in -100.0f64..0.0) {
            prop_assert_eq!(eval_bridge(a, b), eval_bridge(b, a));
        }

        #[test]
        fn bridge_equal_signal_ridge(a in -100.0f64..0.0) {
            prop_assert!((eval_bridge(a, a) - (-2.0 * a.abs())).abs() < 1e-12);
        }

        #[test]
        fn bridge_bounded_by_sum_term(a in -100.0f64..0.0, b in -100.0f64..0.0) {
            let f = eval_bridge(a, b);
            prop_assert!(f <= -(a + b).abs() + 1e-12);
            if a == b {
                prop_assert!((f - (-(a + b).abs())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bridge_argmax_is_midpoint_on_symmetric_pair() {
        // 1-D toy path-loss pair: mirror-image nodes, no noise. Fine grid
        // evaluation puts the maximum at the center.
        let loss = |d: f64| -40.0 - 25.0 * d.max(1.0).log10();
        let x1 = 2.0;
        let x2 = 14.0;
        let mut best_x = f64::NAN;
        let mut best_f = f64::NEG_INFINITY;
        let mut x = 0.0f64;
        while x <= 16.0 {
            let f = eval_bridge(loss((x - x1).abs()), loss((x - x2).abs()));
            if f > best_f {
                best_f = f;
                best_x = x;
            }
            x += 0.01;
        }
        assert_relative_eq!(best_x, 8.0, epsilon = 0.011);
    }

    #[test]
    fn bridge_noise_propagation_near_twice_single() {
        // At a generic point (unequal means, negative sum) the linearization
        // gives std(f) = 2 sigma = 8.
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            values.push(eval_bridge(-50.0 + 4.0 * z1, -60.0 + 4.0 * z2));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((7.0..=9.0).contains(&std), "std {std}");
    }

    fn s(t: f64, node_id: u32, rssi: f64) -> Sample {
        Sample { t, position: Position::new(t, 0.0), node_id, rssi }
    }

    #[test]
    fn pairing_dense_streams_keeps_node_a_count() {
        let mut samples = Vec::new();
        for k in 0..200 {
            let t = k as f64 * 0.005;
            samples.push(s(t, 1, -50.0));
            samples.push(s(t + 0.002, 2, -55.0));
        }
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let spec = TargetSpec::Bridge { node_a: 1, node_b: 2 };
        let out = pair_samples(&spec, &samples, 0.25);
        assert_eq!(out.len(), 200);
        assert!(out.windows(2).all(|w| w[0].t <= w[1].t));
        for ts in &out {
            assert_relative_eq!(ts.value, eval_bridge(-50.0, -55.0));
        }
    }

    #[test]
    fn pairing_empty_partner_stream_yields_nothing() {
        let samples = vec![s(0.0, 1, -50.0), s(0.1, 1, -51.0)];
        let spec = TargetSpec::Bridge { node_a: 1, node_b: 2 };
        assert!(pair_samples(&spec, &samples, 0.25).is_empty());
    }

    #[test]
    fn pairing_picks_nearest_within_window() {
        let samples = vec![s(0.0, 1, -50.0), s(0.1, 2, -60.0), s(0.3, 2, -70.0)];
        let spec = TargetSpec::Bridge { node_a: 1, node_b: 2 };
        let out = pair_samples(&spec, &samples, 0.25);
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out[0].value, eval_bridge(-50.0, -60.0));
        // Outside the window nothing pairs.
        let far = vec![s(0.0, 1, -50.0), s(0.5, 2, -60.0)];
        assert!(pair_samples(&spec, &far, 0.25).is_empty());
    }

    #[test]
    fn single_source_passes_through_and_ignores_other_nodes() {
        let samples = vec![s(0.0, 1, -50.0), s(0.05, 2, -60.0), s(0.1, 1, -52.0)];
        let spec = TargetSpec::SingleSource { node: 1 };
        let out = pair_samples(&spec, &samples, 0.25);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].value, -50.0);
        assert_eq!(out[1].value, -52.0);
    }

    #[test]
    fn noiseless_argmax_bridge_is_between_nodes() {
        let cfg = PropagationConfig { shadowing_sigma_db: 0.0, ..PropagationConfig::default() };
        let nodes = vec![
            TransmitterNode { id: 1, x: 0.0, y: 0.0, ref_power_dbm: -40.0, packet_rate: 200.0 },
            TransmitterNode { id: 2, x: 10.0, y: 0.0, ref_power_dbm: -40.0, packet_rate: 200.0 },
        ];
        let env = RfEnvironment::new(cfg, nodes).unwrap();
        let spec = TargetSpec::Bridge { node_a: 1, node_b: 2 };
        let candidates: Vec<Position> =
            (0..=100).map(|i| Position::new(i as f64 * 0.1, 0.0)).collect();
        let best = noiseless_argmax(&env, &spec, &candidates).unwrap();
        assert_relative_eq!(best.x, 5.0, epsilon = 0.11);
    }
}
