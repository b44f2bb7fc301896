//! Stochastic RF measurement simulator: log-distance path loss per
//! transmitter with log-normal shadowing, an optional spatially frozen
//! fading field, optional per-wall attenuation, and packetized RSSI streams
//! at Poisson arrival times along robot trajectories.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{OccupancyGrid, Position};

/// A packet source at a fixed position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterNode {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Received power at the reference distance, dBm.
    #[serde(default = "default_ref_power")]
    pub ref_power_dbm: f64,
    /// Dummy packets per second.
    #[serde(default = "default_packet_rate")]
    pub packet_rate: f64,
}

fn default_ref_power() -> f64 {
    -40.0
}

fn default_packet_rate() -> f64 {
    200.0
}

impl TransmitterNode {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

/// Frozen small-scale fading: a seeded lattice of Gaussians with bilinear
/// interpolation. The field is a pure function of position, so fading-induced
/// local maxima persist across revisits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Standard deviation of the field at lattice nodes, dB.
    #[serde(default = "default_fading_amplitude")]
    pub amplitude_db: f64,
    /// Lattice spacing, meters. The default is on the order of a 2.4 GHz
    /// wavelength.
    #[serde(default = "default_fading_correlation")]
    pub correlation_length: f64,
}

fn default_fading_amplitude() -> f64 {
    6.0
}

fn default_fading_correlation() -> f64 {
    0.125
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            amplitude_db: default_fading_amplitude(),
            correlation_length: default_fading_correlation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_ref_distance")]
    pub ref_distance: f64,
    /// Log-normal shadowing standard deviation, dB.
    #[serde(default = "default_shadowing_sigma")]
    pub shadowing_sigma_db: f64,
    /// Extra loss per occupied cell crossed by the line of sight, dB.
    /// Requires a grid on the environment; 0 disables the effect.
    #[serde(default)]
    pub wall_attenuation_db: f64,
    #[serde(default)]
    pub fading: FadingConfig,
    /// Seed of the frozen fading field (not of per-packet noise).
    #[serde(default)]
    pub seed: u64,
}

fn default_path_loss_exponent() -> f64 {
    2.5
}

fn default_ref_distance() -> f64 {
    1.0
}

fn default_shadowing_sigma() -> f64 {
    4.0
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: default_path_loss_exponent(),
            ref_distance: default_ref_distance(),
            shadowing_sigma_db: default_shadowing_sigma(),
            wall_attenuation_db: 0.0,
            fading: FadingConfig::default(),
            seed: 0,
        }
    }
}

/// One timestamped, positioned RSSI measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub position: Position,
    pub node_id: u32,
    pub rssi: f64,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("duplicate transmitter id {0}")]
    DuplicateNodeId(u32),
    #[error("transmitter {0}: packet_rate must be positive")]
    BadPacketRate(u32),
    #[error("path_loss_exponent must be positive, got {0}")]
    BadExponent(f64),
    #[error("ref_distance must be positive, got {0}")]
    BadRefDistance(f64),
    #[error("shadowing_sigma_db must be non-negative, got {0}")]
    BadSigma(f64),
    #[error("fading correlation_length must be positive, got {0}")]
    BadCorrelationLength(f64),
    #[error("environment has no transmitters")]
    NoTransmitters,
}

/// Immutable propagation environment. Each episode brings its own RNG;
/// identical (seed, query sequence) pairs produce bit-identical streams.
#[derive(Debug, Clone)]
pub struct RfEnvironment {
    config: PropagationConfig,
    nodes: Vec<TransmitterNode>,
    grid: Option<Arc<OccupancyGrid>>,
}

impl RfEnvironment {
    pub fn new(config: PropagationConfig, nodes: Vec<TransmitterNode>) -> Result<Self, EnvError> {
        if nodes.is_empty() {
            return Err(EnvError::NoTransmitters);
        }
        let mut ids: Vec<u32> = nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(EnvError::DuplicateNodeId(dup[0]));
        }
        if let Some(bad) = nodes.iter().find(|n| !(n.packet_rate > 0.0)) {
            return Err(EnvError::BadPacketRate(bad.id));
        }
        if !(config.path_loss_exponent > 0.0) {
            return Err(EnvError::BadExponent(config.path_loss_exponent));
        }
        if !(config.ref_distance > 0.0) {
            return Err(EnvError::BadRefDistance(config.ref_distance));
        }
        if !(config.shadowing_sigma_db >= 0.0) {
            return Err(EnvError::BadSigma(config.shadowing_sigma_db));
        }
        if !(config.fading.correlation_length > 0.0) {
            return Err(EnvError::BadCorrelationLength(config.fading.correlation_length));
        }
        Ok(Self { config, nodes, grid: None })
    }

    /// Attach the world grid, enabling per-wall attenuation when
    /// `wall_attenuation_db > 0`.
    pub fn with_grid(mut self, grid: Arc<OccupancyGrid>) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[TransmitterNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Option<&TransmitterNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Expected RSSI at `p`: reference power minus log-distance path loss,
    /// plus the frozen fading offset and minus any wall losses. Distances
    /// below `ref_distance` clamp to the reference value.
    pub fn mean_rssi(&self, node: &TransmitterNode, p: Position) -> f64 {
        let cfg = &self.config;
        let d = p.distance_to(node.position()).max(cfg.ref_distance);
        let mut rssi = node.ref_power_dbm
            - 10.0 * cfg.path_loss_exponent * (d / cfg.ref_distance).log10();
        if cfg.fading.enabled {
            rssi += fading_offset(cfg.seed, &cfg.fading, p);
        }
        if cfg.wall_attenuation_db > 0.0 {
            if let Some(grid) = &self.grid {
                rssi -= cfg.wall_attenuation_db
                    * walls_crossed(grid, node.position(), p) as f64;
            }
        }
        rssi
    }

    pub fn mean_rssi_by_id(&self, id: u32, p: Position) -> f64 {
        let node = self.node(id).expect("unknown transmitter id");
        self.mean_rssi(node, p)
    }

    /// One noisy measurement: the mean plus a log-normal shadowing draw.
    pub fn sample_rssi(&self, node: &TransmitterNode, p: Position, rng: &mut impl Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean_rssi(node, p) + self.config.shadowing_sigma_db * z
    }

    /// Packet stream while traversing `from -> to` at `speed` m/s. Each node
    /// emits at Poisson arrivals with its own rate; positions interpolate
    /// linearly with time; output is merged and time-sorted.
    pub fn stream_along(
        &self,
        from: Position,
        to: Position,
        speed: f64,
        t0: f64,
        rng: &mut impl Rng,
    ) -> Vec<Sample> {
        assert!(speed > 0.0, "speed must be positive");
        let duration = from.distance_to(to) / speed;
        self.stream_linear(from, to, duration, t0, rng)
    }

    /// Packet stream while holding position for `duration` seconds.
    pub fn stream_dwell(
        &self,
        p: Position,
        duration: f64,
        t0: f64,
        rng: &mut impl Rng,
    ) -> Vec<Sample> {
        self.stream_linear(p, p, duration, t0, rng)
    }

    fn stream_linear(
        &self,
        from: Position,
        to: Position,
        duration: f64,
        t0: f64,
        rng: &mut impl Rng,
    ) -> Vec<Sample> {
        let mut out = Vec::new();
        if duration <= 0.0 {
            return out;
        }
        let t_end = t0 + duration;
        for node in &self.nodes {
            let inter = Exp::new(node.packet_rate).expect("validated packet rate");
            let mut t = t0 + inter.sample(rng);
            while t <= t_end {
                let p = from.lerp(to, (t - t0) / duration);
                out.push(Sample {
                    t,
                    position: p,
                    node_id: node.id,
                    rssi: self.sample_rssi(node, p, rng),
                });
                t += inter.sample(rng);
            }
        }
        out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.node_id.cmp(&b.node_id)));
        out
    }
}

/// Occupied cells entered by the segment `a -> b`, via grid line traversal.
fn walls_crossed(grid: &OccupancyGrid, a: Position, b: Position) -> usize {
    let res = grid.resolution();
    let len = a.distance_to(b);
    let steps = (len / (res * 0.25)).ceil() as usize;
    let mut count = 0;
    let mut last: Option<(usize, usize)> = None;
    for k in 0..=steps {
        let p = a.lerp(b, if steps == 0 { 0.0 } else { k as f64 / steps as f64 });
        let Some(cell) = grid.cell_index(p) else { continue };
        if last == Some(cell) {
            continue;
        }
        last = Some(cell);
        if grid.is_occupied_cell(cell.0, cell.1) {
            count += 1;
        }
    }
    count
}

/// Frozen fading field value at `p`: bilinear interpolation of unit normals
/// hashed from (seed, lattice node), scaled by the amplitude.
pub fn fading_offset(seed: u64, fading: &FadingConfig, p: Position) -> f64 {
    if !fading.enabled || fading.amplitude_db == 0.0 {
        return 0.0;
    }
    let l = fading.correlation_length;
    let gx = p.x / l;
    let gy = p.y / l;
    let i0 = gx.floor();
    let j0 = gy.floor();
    let fx = gx - i0;
    let fy = gy - j0;
    let (i0, j0) = (i0 as i64, j0 as i64);
    let v00 = lattice_normal(seed, i0, j0);
    let v10 = lattice_normal(seed, i0 + 1, j0);
    let v01 = lattice_normal(seed, i0, j0 + 1);
    let v11 = lattice_normal(seed, i0 + 1, j0 + 1);
    let v0 = v00 + (v10 - v00) * fx;
    let v1 = v01 + (v11 - v01) * fx;
    fading.amplitude_db * (v0 + (v1 - v0) * fy)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic standard normal for a lattice node, via Box-Muller on two
/// hashed uniforms.
fn lattice_normal(seed: u64, i: i64, j: i64) -> f64 {
    let h1 = splitmix64(splitmix64(splitmix64(seed) ^ i as u64) ^ j as u64);
    let h2 = splitmix64(h1 ^ 0x6a09_e667_f3bc_c909);
    // u1 in (0, 1], u2 in [0, 1).
    let u1 = ((h1 >> 11) as f64 + 1.0) / 9_007_199_254_740_992.0;
    let u2 = (h2 >> 11) as f64 / 9_007_199_254_740_992.0;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node_at(x: f64, y: f64) -> TransmitterNode {
        TransmitterNode { id: 1, x, y, ref_power_dbm: -40.0, packet_rate: 200.0 }
    }

    fn quiet_env(exponent: f64) -> RfEnvironment {
        let cfg = PropagationConfig {
            path_loss_exponent: exponent,
            shadowing_sigma_db: 0.0,
            ..PropagationConfig::default()
        };
        RfEnvironment::new(cfg, vec![node_at(0.0, 0.0)]).unwrap()
    }

    #[test]
    fn mean_rssi_at_reference_distance() {
        let env = quiet_env(2.5);
        let node = &env.nodes()[0];
        assert_relative_eq!(env.mean_rssi(node, Position::new(1.0, 0.0)), -40.0);
        // Inside the reference distance the value clamps.
        assert_relative_eq!(env.mean_rssi(node, Position::new(0.1, 0.0)), -40.0);
    }

    #[test]
    fn mean_rssi_analytic_decade() {
        let env = quiet_env(2.0);
        let node = &env.nodes()[0];
        assert_relative_eq!(env.mean_rssi(node, Position::new(10.0, 0.0)), -60.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_rssi_radially_symmetric() {
        let env = quiet_env(2.5);
        let node = &env.nodes()[0];
        let a = env.mean_rssi(node, Position::new(3.0, 4.0));
        let b = env.mean_rssi(node, Position::new(-4.0, 3.0));
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn mean_rssi_monotone_in_distance() {
        let env = quiet_env(3.0);
        let node = &env.nodes()[0];
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let v = env.mean_rssi(node, Position::new(k as f64 * 0.25, 0.0));
            assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn sample_rssi_exact_when_sigma_zero() {
        let env = quiet_env(2.5);
        let node = &env.nodes()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Position::new(5.0, 1.0);
        assert_relative_eq!(env.sample_rssi(node, p, &mut rng), env.mean_rssi(node, p));
    }

    #[test]
    fn sample_rssi_noise_statistics() {
        let cfg = PropagationConfig { shadowing_sigma_db: 4.0, ..PropagationConfig::default() };
        let env = RfEnvironment::new(cfg, vec![node_at(0.0, 0.0)]).unwrap();
        let node = &env.nodes()[0];
        let p = Position::new(7.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| env.sample_rssi(node, p, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((3.86..=4.14).contains(&std), "sample std {std}");
        assert!((mean - env.mean_rssi(node, p)).abs() < 0.15, "sample mean {mean}");
    }

    #[test]
    fn stream_dwell_poisson_count() {
        let env = quiet_env(2.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = env.stream_dwell(Position::new(2.0, 2.0), 1.0, 0.0, &mut rng);
        // Poisson(200), 3-sigma window.
        assert!((158..=242).contains(&samples.len()), "count {}", samples.len());
        assert!(samples.iter().all(|s| s.position == Position::new(2.0, 2.0)));
    }

    #[test]
    fn stream_zero_duration_is_empty() {
        let env = quiet_env(2.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Position::new(2.0, 2.0);
        assert!(env.stream_dwell(p, 0.0, 0.0, &mut rng).is_empty());
        assert!(env.stream_along(p, p, 1.0, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn stream_two_nodes_merged_and_sorted() {
        let cfg = PropagationConfig { shadowing_sigma_db: 0.0, ..PropagationConfig::default() };
        let nodes = vec![
            TransmitterNode { id: 1, x: 0.0, y: 0.0, ref_power_dbm: -40.0, packet_rate: 150.0 },
            TransmitterNode { id: 2, x: 5.0, y: 0.0, ref_power_dbm: -40.0, packet_rate: 150.0 },
        ];
        let env = RfEnvironment::new(cfg, nodes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = env.stream_along(Position::new(0.0, 1.0), Position::new(4.0, 1.0), 0.5, 0.0, &mut rng);
        assert!(samples.iter().any(|s| s.node_id == 1));
        assert!(samples.iter().any(|s| s.node_id == 2));
        assert!(samples.windows(2).all(|w| w[0].t <= w[1].t));
        // Positions track time linearly.
        for s in &samples {
            assert_relative_eq!(s.position.x, 0.5 * s.t, epsilon = 1e-12);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let env = quiet_env(2.5);
        let a = env.stream_dwell(Position::new(1.0, 1.0), 0.5, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = env.stream_dwell(Position::new(1.0, 1.0), 0.5, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn fading_is_pure_and_zero_mean_at_scale() {
        let fading = FadingConfig { enabled: true, amplitude_db: 6.0, correlation_length: 0.5 };
        let a = fading_offset(99, &fading, Position::new(3.21, 4.56));
        let b = fading_offset(99, &fading, Position::new(3.21, 4.56));
        assert_eq!(a, b);
        // Averaging over an area much larger than the correlation length
        // recovers roughly zero: the path-loss field shows through.
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..60 {
            for j in 0..60 {
                sum += fading_offset(99, &fading, Position::new(i as f64 * 0.9, j as f64 * 0.9));
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(mean.abs() < 0.5, "binned fading mean {mean}");
    }

    #[test]
    fn fading_disabled_is_zero() {
        let fading = FadingConfig::default();
        assert_eq!(fading_offset(1, &fading, Position::new(1.0, 1.0)), 0.0);
    }

    #[test]
    fn wall_attenuation_reduces_mean() {
        let grid = OccupancyGrid::parse(concat!(
            "resolution 0.5 origin 0 0\n",
            "..........\n",
            "....##....\n",
            "..........\n",
        ))
        .unwrap();
        let cfg = PropagationConfig {
            shadowing_sigma_db: 0.0,
            wall_attenuation_db: 5.0,
            ..PropagationConfig::default()
        };
        let env = RfEnvironment::new(cfg, vec![node_at(0.5, 0.75)]).unwrap()
            .with_grid(Arc::new(grid));
        let node = env.node(1).unwrap().clone();
        let through_wall = env.mean_rssi(&node, Position::new(4.5, 0.75));
        let clear = env.mean_rssi(&node, Position::new(0.5, 4.75));
        // Same distance, one line of sight crosses two wall cells.
        let d1 = Position::new(4.5, 0.75).distance_to(node.position());
        let d2 = Position::new(0.5, 4.75).distance_to(node.position());
        assert_relative_eq!(d1, d2, epsilon = 1e-12);
        assert_relative_eq!(clear - through_wall, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_invalid_configs() {
        let cfg = PropagationConfig::default();
        assert!(matches!(
            RfEnvironment::new(cfg.clone(), vec![]),
            Err(EnvError::NoTransmitters)
        ));
        let dup = vec![node_at(0.0, 0.0), node_at(1.0, 1.0)];
        assert!(matches!(
            RfEnvironment::new(cfg.clone(), dup),
            Err(EnvError::DuplicateNodeId(1))
        ));
        let bad = PropagationConfig { path_loss_exponent: 0.0, ..cfg };
        assert!(matches!(
            RfEnvironment::new(bad, vec![node_at(0.0, 0.0)]),
            Err(EnvError::BadExponent(_))
        ));
    }
}
