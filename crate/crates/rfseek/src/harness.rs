//! Experiment harness: TOML config files, single and batch episode runs,
//! seeker-vs-baseline comparisons, and field-map exports. Logs are
//! newline-delimited JSON records, summaries comma-separated text; both
//! parse back into their defining types.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelParams;
use crate::rf_env::{EnvError, PropagationConfig, RfEnvironment, TransmitterNode};
use crate::seeker::{
    self, EpisodeContext, EpisodeError, EpisodeOutcome, SeekerConfig, TrajectoryLog,
};
use crate::targets::{self, TargetSpec};
use crate::world::{LegalLattice, MapError, OccupancyGrid, Position, RobotFootprint};

/// On-disk experiment description. Paths are resolved relative to the
/// config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Path to the map file.
    pub map: PathBuf,
    #[serde(default = "default_footprint_radius")]
    pub footprint_radius: f64,
    pub start: Position,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Default output directory; overridable by CLI flag or environment.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub transmitters: Vec<TransmitterNode>,
    #[serde(default)]
    pub propagation: PropagationConfig,
    pub target: TargetSpec,
    pub model: ModelParams,
    #[serde(default)]
    pub seeker: Option<SeekerConfig>,
}

fn default_footprint_radius() -> f64 {
    0.35
}

fn default_runs() -> u32 {
    1
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("map file {path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error("config field {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("environment: {0}")]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("episode setup: {0}")]
    Episode(#[from] EpisodeError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// A loaded, validated experiment ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Arc<OccupancyGrid>,
    pub footprint: RobotFootprint,
    pub env: RfEnvironment,
    pub seeker: SeekerConfig,
}

impl Experiment {
    /// Load a config file, resolve the map path, and validate everything.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) })?;
        if config.map.is_relative() {
            if let Some(dir) = path.parent() {
                config.map = dir.join(&config.map);
            }
        }
        Self::from_config(config)
    }

    /// Validate an in-memory config (map path must already be resolved).
    pub fn from_config(config: ExperimentConfig) -> Result<Self, ConfigError> {
        let grid = OccupancyGrid::load(&config.map)
            .map_err(|source| ConfigError::Map { path: config.map.clone(), source })?;
        let invalid = |field: &str, reason: String| ConfigError::Invalid {
            field: field.to_string(),
            reason,
        };
        if !(config.footprint_radius > 0.0) {
            return Err(invalid("footprint_radius", "must be positive".into()));
        }
        let half_extent = 0.5
            * (grid.width() as f64 * grid.resolution())
                .min(grid.height() as f64 * grid.resolution());
        if config.footprint_radius >= half_extent {
            return Err(invalid(
                "footprint_radius",
                format!("must be below half the map's smaller extent ({half_extent} m)"),
            ));
        }
        if config.runs < 1 {
            return Err(invalid("runs", "must be at least 1".into()));
        }
        let footprint = RobotFootprint::new(config.footprint_radius);
        if !grid.is_legal(&footprint, config.start) {
            return Err(invalid(
                "start",
                format!("position {} is not legal on the map", config.start),
            ));
        }
        let env = RfEnvironment::new(config.propagation.clone(), config.transmitters.clone())?
            .with_grid(Arc::new(grid.clone()));
        for id in config.target.node_ids() {
            if env.node(id).is_none() {
                return Err(invalid("target", format!("unknown transmitter id {id}")));
            }
        }
        if let TargetSpec::Bridge { node_a, node_b } = config.target {
            if node_a == node_b {
                return Err(invalid("target", "bridge nodes must be distinct".into()));
            }
        }
        let seeker = config
            .seeker
            .unwrap_or_else(|| SeekerConfig::for_target(&config.target));
        seeker
            .validate()
            .map_err(|reason| invalid("seeker", reason))?;
        Ok(Self { config, grid: Arc::new(grid), footprint, env, seeker })
    }

    pub fn context(&self) -> EpisodeContext<'_> {
        EpisodeContext {
            grid: &self.grid,
            footprint: &self.footprint,
            env: &self.env,
            target: &self.config.target,
            model: &self.config.model,
            config: &self.seeker,
            start: self.config.start,
        }
    }

    /// The evaluation-only optimum summaries measure distances against:
    /// the source position for single-source targets, the noiseless field
    /// argmax over the search lattice for compound targets.
    pub fn noiseless_optimum(&self) -> Position {
        let lattice =
            LegalLattice::build(&self.grid, &self.footprint, self.seeker.greedy_grid_resolution);
        targets::optimum(&self.env, &self.config.target, lattice.points())
            .expect("a valid map has legal lattice points")
    }
}

/// Per-run result row, written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub strategy: String,
    pub iterations: u32,
    pub path_length_m: f64,
    pub final_distance_m: f64,
    pub refit_count: u32,
    pub wall_time_s: f64,
    pub aborted: bool,
}

/// Batch aggregate, written as a single CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: u32,
    pub aborted: u32,
    pub success_rate_1m: f64,
    pub success_rate_2m: f64,
    pub success_rate_3m: f64,
    pub median_final_distance_m: f64,
    pub median_path_length_m: f64,
    pub q1_path_length_m: f64,
    pub q3_path_length_m: f64,
}

/// Aggregate a set of run summaries. Success rates count non-aborted runs
/// ending within the radius; quantiles are linearly interpolated.
pub fn aggregate(summaries: &[RunSummary]) -> Aggregate {
    let runs = summaries.len() as u32;
    let aborted = summaries.iter().filter(|s| s.aborted).count() as u32;
    let rate_within = |radius: f64| {
        if summaries.is_empty() {
            return 0.0;
        }
        summaries.iter().filter(|s| !s.aborted && s.final_distance_m <= radius).count() as f64
            / summaries.len() as f64
    };
    let mut dists: Vec<f64> = summaries.iter().map(|s| s.final_distance_m).collect();
    let mut lengths: Vec<f64> = summaries.iter().map(|s| s.path_length_m).collect();
    dists.sort_by(f64::total_cmp);
    lengths.sort_by(f64::total_cmp);
    Aggregate {
        runs,
        aborted,
        success_rate_1m: rate_within(1.0),
        success_rate_2m: rate_within(2.0),
        success_rate_3m: rate_within(3.0),
        median_final_distance_m: quantile(&dists, 0.5),
        median_path_length_m: quantile(&lengths, 0.5),
        q1_path_length_m: quantile(&lengths, 0.25),
        q3_path_length_m: quantile(&lengths, 0.75),
    }
}

/// Linearly interpolated quantile of sorted data (the common "R-7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

fn summarize(outcome: &EpisodeOutcome, optimum: Position, strategy: &str, wall_time_s: f64) -> RunSummary {
    RunSummary {
        seed: outcome.stats.seed,
        strategy: strategy.to_string(),
        iterations: outcome.stats.iterations,
        path_length_m: outcome.stats.path_length_m,
        final_distance_m: outcome.stats.final_position.distance_to(optimum),
        refit_count: outcome.stats.refit_count,
        wall_time_s,
        aborted: outcome.stats.aborted,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
    }
    let bytes = w.into_inner().expect("csv writer over Vec cannot fail");
    write_file(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Read back a CSV written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })
}

pub fn log_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("run_{seed}.jsonl"))
}

pub fn summary_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("run_{seed}.csv"))
}

/// Run one episode and write its log and summary into `out_dir`.
pub fn run(
    exp: &Experiment,
    seed: u64,
    out_dir: &Path,
) -> Result<(TrajectoryLog, RunSummary), HarnessError> {
    ensure_dir(out_dir)?;
    let optimum = exp.noiseless_optimum();
    let started = Instant::now();
    let outcome = seeker::run_episode(&exp.context(), seed)?;
    let wall = started.elapsed().as_secs_f64();
    let summary = summarize(&outcome, optimum, "internal_model", wall);
    write_file(&log_path(out_dir, seed), &outcome.log.to_jsonl())?;
    write_csv(&summary_path(out_dir, seed), std::slice::from_ref(&summary))?;
    Ok((outcome.log, summary))
}

pub struct BatchResult {
    pub summaries: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

/// Run `runs` episodes with seeds `base_seed..base_seed+runs`, writing
/// per-run files plus `aggregate.csv`. Runs are isolated: each is seeded
/// independently, so a batch reproduces the same logs as separate `run`
/// invocations. Aborted runs are flagged, not fatal.
pub fn batch(exp: &Experiment, runs: u32, out_dir: &Path) -> Result<BatchResult, HarnessError> {
    ensure_dir(out_dir)?;
    let optimum = exp.noiseless_optimum();
    let ctx = exp.context();
    let mut summaries = Vec::with_capacity(runs as usize);
    for i in 0..runs {
        let seed = exp.config.base_seed.wrapping_add(i as u64);
        let started = Instant::now();
        let outcome = seeker::run_episode(&ctx, seed)?;
        let wall = started.elapsed().as_secs_f64();
        let summary = summarize(&outcome, optimum, "internal_model", wall);
        write_file(&log_path(out_dir, seed), &outcome.log.to_jsonl())?;
        write_csv(&summary_path(out_dir, seed), std::slice::from_ref(&summary))?;
        summaries.push(summary);
    }
    let agg = aggregate(&summaries);
    write_csv(&out_dir.join("aggregate.csv"), std::slice::from_ref(&agg))?;
    Ok(BatchResult { summaries, aggregate: agg })
}

/// One exported field-map cell: sample statistics of the noisy target at a
/// legal lattice position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCell {
    pub x: f64,
    pub y: f64,
    pub mean: f64,
    pub std: f64,
    pub count: u32,
}

/// Monte-Carlo map of the target field: for every legal cell center at
/// `resolution`, draw `samples_per_cell` noisy target evaluations and record
/// mean, standard deviation and count. Written to `field_map.csv`.
pub fn field_map(
    exp: &Experiment,
    resolution: f64,
    samples_per_cell: u32,
    out_dir: &Path,
) -> Result<Vec<FieldCell>, HarnessError> {
    if !(resolution > 0.0) {
        return Err(ConfigError::Invalid {
            field: "resolution".into(),
            reason: "must be positive".into(),
        }
        .into());
    }
    if samples_per_cell < 1 {
        return Err(ConfigError::Invalid {
            field: "samples".into(),
            reason: "must be at least 1".into(),
        }
        .into());
    }
    ensure_dir(out_dir)?;
    let lattice = LegalLattice::build(&exp.grid, &exp.footprint, resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(exp.config.base_seed);
    let mut cells = Vec::with_capacity(lattice.len());
    for &p in lattice.points() {
        let mut values = Vec::with_capacity(samples_per_cell as usize);
        for _ in 0..samples_per_cell {
            values.push(noisy_target(exp, p, &mut rng));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        cells.push(FieldCell { x: p.x, y: p.y, mean, std, count: samples_per_cell });
    }
    write_csv(&out_dir.join("field_map.csv"), &cells)?;
    Ok(cells)
}

fn noisy_target(exp: &Experiment, p: Position, rng: &mut ChaCha8Rng) -> f64 {
    match exp.config.target {
        TargetSpec::SingleSource { node } => {
            let node = exp.env.node(node).expect("validated id");
            targets::eval_single(exp.env.sample_rssi(node, p, rng))
        }
        TargetSpec::Bridge { node_a, node_b } => {
            let a = exp.env.node(node_a).expect("validated id");
            let b = exp.env.node(node_b).expect("validated id");
            targets::eval_bridge(exp.env.sample_rssi(a, p, rng), exp.env.sample_rssi(b, p, rng))
        }
    }
}

/// Comparison row: one strategy's aggregate over the shared seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: String,
    pub runs: u32,
    pub aborted: u32,
    pub success_rate_2m: f64,
    pub median_path_length_m: f64,
    pub median_final_distance_m: f64,
}

pub struct CompareResult {
    pub per_run: Vec<RunSummary>,
    pub rows: Vec<CompareRow>,
}

/// Feed the same seeds to the internal-model seeker and the gradient
/// baseline; write per-run rows (`compare_runs.csv`) and the paired
/// aggregate (`compare.csv`).
pub fn compare(exp: &Experiment, runs: u32, out_dir: &Path) -> Result<CompareResult, HarnessError> {
    if runs < 2 {
        return Err(ConfigError::Invalid {
            field: "runs".into(),
            reason: "compare needs at least 2 runs".into(),
        }
        .into());
    }
    ensure_dir(out_dir)?;
    let optimum = exp.noiseless_optimum();
    let ctx = exp.context();
    let mut per_run = Vec::new();
    for i in 0..runs {
        let seed = exp.config.base_seed.wrapping_add(i as u64);
        let started = Instant::now();
        let model_run = seeker::run_episode(&ctx, seed)?;
        let model_wall = started.elapsed().as_secs_f64();
        per_run.push(summarize(&model_run, optimum, "internal_model", model_wall));
        let started = Instant::now();
        let grad_run = seeker::run_gradient_episode(&ctx, seed)?;
        let grad_wall = started.elapsed().as_secs_f64();
        per_run.push(summarize(&grad_run, optimum, "gradient_baseline", grad_wall));
    }
    let mut rows = Vec::new();
    for strategy in ["internal_model", "gradient_baseline"] {
        let subset: Vec<RunSummary> =
            per_run.iter().filter(|s| s.strategy == strategy).cloned().collect();
        let agg = aggregate(&subset);
        rows.push(CompareRow {
            strategy: strategy.to_string(),
            runs: agg.runs,
            aborted: agg.aborted,
            success_rate_2m: agg.success_rate_2m,
            median_path_length_m: agg.median_path_length_m,
            median_final_distance_m: agg.median_final_distance_m,
        });
    }
    write_csv(&out_dir.join("compare_runs.csv"), &per_run)?;
    write_csv(&out_dir.join("compare.csv"), &rows)?;
    Ok(CompareResult { per_run, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&data, 0.5), 2.5);
        assert_eq!(quantile(&data, 0.0), 1.0);
        assert_eq!(quantile(&data, 1.0), 4.0);
        assert_eq!(quantile(&data, 0.25), 1.75);
    }

    #[test]
    fn aggregate_counts_successes() {
        let mk = |d: f64, aborted: bool| RunSummary {
            seed: 0,
            strategy: "internal_model".into(),
            iterations: 10,
            path_length_m: 12.0,
            final_distance_m: d,
            refit_count: 2,
            wall_time_s: 0.1,
            aborted,
        };
        let agg = aggregate(&[mk(0.5, false), mk(1.5, false), mk(2.5, false), mk(0.1, true)]);
        assert_eq!(agg.runs, 4);
        assert_eq!(agg.aborted, 1);
        assert_eq!(agg.success_rate_1m, 0.25);
        assert_eq!(agg.success_rate_2m, 0.5);
        assert_eq!(agg.success_rate_3m, 0.75);
    }
}
