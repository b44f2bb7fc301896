//! The source-seeking meta-algorithm: keep an internal forward model of the
//! target field, validate it against the mean measurement over the last
//! second, refit from all collected data when the error threshold is
//! exceeded, and pick actions epsilon-greedily with an annealed epsilon and
//! novelty-driven random movement. A plane-fit gradient-ascent baseline is
//! provided for comparison runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, FitError, ForwardModel, ModelParams, TrainingSet, SUBSAMPLE_CAP};
use crate::rf_env::{PropagationConfig, RfEnvironment, Sample, TransmitterNode};
use crate::targets::{self, TargetSample, TargetSpec};
use crate::world::{LegalLattice, OccupancyGrid, PlanError, Position, RobotFootprint};

/// Scan step of the obstacle line search, meters.
pub const SEGMENT_SCAN_INCREMENT: f64 = 0.1;
/// Novelty candidates beyond this many step widths carry negligible
/// exponential weight and are excluded.
pub const NOVELTY_CUTOFF_FACTOR: f64 = 4.0;
/// Local radius of the gradient baseline's plane fit, meters.
pub const BASELINE_LOCAL_RADIUS: f64 = 2.0;
const MAX_NOPATH_REDRAWS: u32 = 10;
const MAX_VALIDATION_DWELLS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeekerConfig {
    /// Regular movement step, meters.
    #[serde(default = "d_step_width")]
    pub step_width: f64,
    #[serde(default = "d_epsilon_floor")]
    pub epsilon_floor: f64,
    #[serde(default = "d_epsilon_span")]
    pub epsilon_span: f64,
    /// Annealing rate; the default puts epsilon at 0.5 after 5 iterations.
    #[serde(default = "d_anneal_alpha")]
    pub anneal_alpha: f64,
    /// Model validation threshold in target units.
    #[serde(default = "d_error_threshold")]
    pub error_threshold: f64,
    /// Averaging window for validation, seconds.
    #[serde(default = "d_validation_window")]
    pub validation_window: f64,
    /// Novelty steps keep at least this distance from the past trajectory.
    #[serde(default = "d_novelty_min_dist")]
    pub novelty_min_dist: f64,
    /// Spacing of the grid search over the model, meters.
    #[serde(default = "d_greedy_grid_resolution")]
    pub greedy_grid_resolution: f64,
    /// The initial random movement ranges up to this many step widths.
    #[serde(default = "d_initial_step_factor")]
    pub initial_step_factor: f64,
    #[serde(default = "d_max_iterations")]
    pub max_iterations: u32,
    /// Optional termination: stop once within this distance of the true
    /// field optimum (evaluation-only; never used for decisions).
    #[serde(default)]
    pub stop_radius: Option<f64>,
    /// Robot speed, m/s.
    #[serde(default = "d_speed")]
    pub speed: f64,
    /// Pairing window for compound targets, seconds.
    #[serde(default = "d_pairing_window")]
    pub pairing_window: f64,
}

fn d_step_width() -> f64 {
    1.0
}
fn d_epsilon_floor() -> f64 {
    0.1
}
fn d_epsilon_span() -> f64 {
    0.9
}
fn d_anneal_alpha() -> f64 {
    // epsilon(5) = 0.5 with span 0.9 and floor 0.1.
    (2.25f64).ln() / 5.0
}
fn d_error_threshold() -> f64 {
    3.0
}
fn d_validation_window() -> f64 {
    1.0
}
fn d_novelty_min_dist() -> f64 {
    0.35
}
fn d_greedy_grid_resolution() -> f64 {
    0.25
}
fn d_initial_step_factor() -> f64 {
    2.0
}
fn d_max_iterations() -> u32 {
    60
}
fn d_speed() -> f64 {
    0.3
}
fn d_pairing_window() -> f64 {
    0.25
}

impl Default for SeekerConfig {
    fn default() -> Self {
        Self {
            step_width: d_step_width(),
            epsilon_floor: d_epsilon_floor(),
            epsilon_span: d_epsilon_span(),
            anneal_alpha: d_anneal_alpha(),
            error_threshold: d_error_threshold(),
            validation_window: d_validation_window(),
            novelty_min_dist: d_novelty_min_dist(),
            greedy_grid_resolution: d_greedy_grid_resolution(),
            initial_step_factor: d_initial_step_factor(),
            max_iterations: d_max_iterations(),
            stop_radius: None,
            speed: d_speed(),
            pairing_window: d_pairing_window(),
        }
    }
}

impl SeekerConfig {
    /// Defaults with the error threshold matched to the target's noise.
    pub fn for_target(target: &TargetSpec) -> Self {
        Self { error_threshold: target.default_error_threshold(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.step_width > 0.0, "step_width must be positive"),
            (self.epsilon_floor > 0.0 && self.epsilon_floor < 1.0, "epsilon_floor must be in (0, 1)"),
            (self.epsilon_span >= 0.0, "epsilon_span must be non-negative"),
            (self.anneal_alpha > 0.0, "anneal_alpha must be positive"),
            (self.error_threshold > 0.0, "error_threshold must be positive"),
            (self.validation_window > 0.0, "validation_window must be positive"),
            (self.novelty_min_dist > 0.0, "novelty_min_dist must be positive"),
            (self.greedy_grid_resolution > 0.0, "greedy_grid_resolution must be positive"),
            (self.initial_step_factor > 0.0, "initial_step_factor must be positive"),
            (self.max_iterations >= 1, "max_iterations must be at least 1"),
            (self.speed > 0.0, "speed must be positive"),
            (self.pairing_window > 0.0, "pairing_window must be positive"),
            (self.stop_radius.map_or(true, |r| r > 0.0), "stop_radius must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(msg.to_string());
            }
        }
        Ok(())
    }
}

/// Annealed exploration probability at iteration `n`:
/// `span * exp(-alpha n) + floor`.
pub fn epsilon(n: u32, cfg: &SeekerConfig) -> f64 {
    cfg.epsilon_span * (-cfg.anneal_alpha * n as f64).exp() + cfg.epsilon_floor
}

/// Full episode state owned by one logical thread of execution.
#[derive(Debug)]
pub struct SeekerState {
    pub n: u32,
    pub now: f64,
    pub position: Position,
    pub samples: Vec<TargetSample>,
    pub model: Option<ForwardModel>,
    pub trajectory: Vec<(f64, Position)>,
    pub refit_events: Vec<(u32, Position)>,
    pub rng: ChaCha8Rng,
}

impl SeekerState {
    pub fn new(start: Position, seed: u64) -> Self {
        Self {
            n: 0,
            now: 0.0,
            position: start,
            samples: Vec::new(),
            model: None,
            trajectory: vec![(0.0, start)],
            refit_events: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no target samples within the validation window")]
pub struct NoRecentSamples;

/// Outcome of one validation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    /// A refit was triggered (model absent or error above threshold).
    pub refit: bool,
    /// The triggered refit produced a model; false means the previous model
    /// (possibly none) was kept.
    pub refit_ok: bool,
    pub window_mean: f64,
    /// Model prediction at the current position before any refit.
    pub prediction: Option<f64>,
}

/// Algorithm core: compare the mean target over the last window against the
/// model prediction at the current position; on error above the threshold,
/// discard the model and fit a new one on a subsample of all available data.
pub fn validate_and_maybe_refit(
    state: &mut SeekerState,
    cfg: &SeekerConfig,
    params: &ModelParams,
) -> Result<Validation, NoRecentSamples> {
    let from_t = state.now - cfg.validation_window;
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in state.samples.iter().rev() {
        if s.t < from_t {
            break;
        }
        sum += s.value;
        count += 1;
    }
    if count == 0 {
        return Err(NoRecentSamples);
    }
    let window_mean = sum / count as f64;
    let prediction = state.model.as_ref().map(|m| m.predict(state.position));
    let triggered = match prediction {
        None => true,
        Some(pred) => (window_mean - pred).abs() > cfg.error_threshold,
    };
    if !triggered {
        return Ok(Validation { refit: false, refit_ok: true, window_mean, prediction });
    }
    let training = models::subsample(
        &TrainingSet::from_samples(&state.samples),
        SUBSAMPLE_CAP,
        &mut state.rng,
    );
    match models::fit(&training, params, state.position, &mut state.rng) {
        Ok(model) => {
            state.model = Some(model);
            state.refit_events.push((state.n, state.position));
            Ok(Validation { refit: true, refit_ok: true, window_mean, prediction })
        }
        // Keep the previous model; the caller forces a novelty step.
        Err(FitError::InsufficientData) | Err(FitError::DegenerateData) => {
            Ok(Validation { refit: true, refit_ok: false, window_mean, prediction })
        }
    }
}

/// Grid-search the model for its maximum over all legal lattice points and
/// step toward it: directly onto the argmax when within one step width,
/// otherwise one step width along the segment (line-scanned past obstacles).
/// Falls back to a novelty step when no point on the segment is legal.
pub fn greedy_waypoint(
    state: &mut SeekerState,
    cfg: &SeekerConfig,
    grid: &OccupancyGrid,
    fp: &RobotFootprint,
    lattice: &LegalLattice,
) -> Option<Position> {
    let model = state.model.as_ref().expect("greedy step requires a fitted model");
    let current = state.position;
    let mut best: Option<(Position, f64, f64)> = None;
    for &p in lattice.points() {
        let v = model.predict(p);
        let d = p.distance_to(current);
        let replace = match best {
            None => true,
            Some((bp, bv, bd)) => {
                v > bv
                    || (v == bv
                        && (d < bd || (d == bd && (p.x, p.y) < (bp.x, bp.y))))
            }
        };
        if replace {
            best = Some((p, v, d));
        }
    }
    let (argmax, _, dist) = best?;
    if dist <= cfg.step_width {
        return Some(argmax);
    }
    match grid.first_valid_on_segment(fp, current, argmax, cfg.step_width, SEGMENT_SCAN_INCREMENT)
    {
        Some(p) => Some(p),
        None => novelty_waypoint(state, cfg, lattice),
    }
}

/// Random movement, novelty-driven: legal lattice points farther than
/// `novelty_min_dist` from every past trajectory point (and within the
/// cutoff radius) are sampled with probability proportional to
/// `exp(-distance)`. When the whole neighborhood has been visited, the
/// novelty constraint is dropped and only legality kept.
pub fn novelty_waypoint(
    state: &mut SeekerState,
    cfg: &SeekerConfig,
    lattice: &LegalLattice,
) -> Option<Position> {
    let current = state.position;
    let cutoff = NOVELTY_CUTOFF_FACTOR * cfg.step_width;
    let in_range = |p: &Position| {
        let d = p.distance_to(current);
        d > 0.0 && d <= cutoff
    };
    let novel: Vec<Position> = lattice
        .points()
        .iter()
        .copied()
        .filter(in_range)
        .filter(|p| {
            state.trajectory.iter().all(|(_, q)| q.distance_to(*p) > cfg.novelty_min_dist)
        })
        .collect();
    let pool = if novel.is_empty() {
        lattice.points().iter().copied().filter(in_range).collect()
    } else {
        novel
    };
    if pool.is_empty() {
        return None;
    }
    let weights: Vec<f64> = pool.iter().map(|p| (-p.distance_to(current)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = state.rng.gen::<f64>() * total;
    for (p, w) in pool.iter().zip(&weights) {
        u -= w;
        if u <= 0.0 {
            return Some(*p);
        }
    }
    pool.last().copied()
}

/// One comparison-baseline step: fit an unregularized plane to the samples
/// within 2 m of the current position and move one step width along its
/// gradient, line-scanned to legality. Falls back to a random direction when
/// fewer than 3 local samples exist, the fit is singular, or the gradient
/// vanishes.
pub fn gradient_baseline_step(
    state: &mut SeekerState,
    cfg: &SeekerConfig,
    grid: &OccupancyGrid,
    fp: &RobotFootprint,
) -> Option<Position> {
    let current = state.position;
    let local: Vec<(Position, f64)> = state
        .samples
        .iter()
        .filter(|s| s.position.distance_to(current) <= BASELINE_LOCAL_RADIUS)
        .map(|s| (s.position, s.value))
        .collect();
    if local.len() >= 3 {
        if let Some(w) = models::fit_plane_raw(&local, 0.0) {
            let norm = w[1].hypot(w[2]);
            if norm > 1e-12 {
                let target = Position::new(
                    current.x + cfg.step_width * w[1] / norm,
                    current.y + cfg.step_width * w[2] / norm,
                );
                if let Some(p) = grid.first_valid_on_segment(
                    fp,
                    current,
                    target,
                    cfg.step_width,
                    SEGMENT_SCAN_INCREMENT,
                ) {
                    return Some(p);
                }
            }
        }
    }
    random_direction_step(state, cfg, grid, fp)
}

fn random_direction_step(
    state: &mut SeekerState,
    cfg: &SeekerConfig,
    grid: &OccupancyGrid,
    fp: &RobotFootprint,
) -> Option<Position> {
    let current = state.position;
    let draw_target = |rng: &mut ChaCha8Rng| {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        Position::new(
            current.x + cfg.step_width * theta.cos(),
            current.y + cfg.step_width * theta.sin(),
        )
    };
    for _ in 0..20 {
        let target = draw_target(&mut state.rng);
        if let Some(p) =
            grid.first_valid_on_segment(fp, current, target, cfg.step_width, SEGMENT_SCAN_INCREMENT)
        {
            return Some(p);
        }
    }
    // Cornered: accept any legal point along a random ray.
    for _ in 0..20 {
        let target = draw_target(&mut state.rng);
        if let Some(p) = grid.first_valid_on_segment(
            fp,
            current,
            target,
            SEGMENT_SCAN_INCREMENT,
            SEGMENT_SCAN_INCREMENT,
        ) {
            return Some(p);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Initial,
    Greedy,
    Epsilon,
    Gradient,
}

/// Episode header: everything needed to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub strategy: String,
    pub seed: u64,
    pub start: Position,
    pub target: TargetSpec,
    pub model: Option<ModelParams>,
    pub seeker: SeekerConfig,
    pub propagation: PropagationConfig,
    pub transmitters: Vec<TransmitterNode>,
    pub footprint_radius: f64,
    pub map_resolution: f64,
    pub map_width: usize,
    pub map_height: usize,
    pub map_origin: Position,
}

/// One replayable event. Serialized as newline-delimited JSON with stable
/// field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(Box<LogHeader>),
    /// A target sample collected during motion or dwell.
    Sample { t: f64, x: f64, y: f64, value: f64 },
    /// The uniform draw deciding greedy vs random at iteration `n`.
    EpsilonDraw { n: u32, epsilon: f64, draw: f64 },
    /// A triggered model refit; `ok` is false when the fit failed and the
    /// previous model was kept.
    Refit {
        n: u32,
        t: f64,
        x: f64,
        y: f64,
        window_mean: f64,
        prediction: Option<f64>,
        ok: bool,
    },
    /// The waypoint chosen at iteration `n` (destination of the move that
    /// follows).
    Waypoint {
        n: u32,
        t: f64,
        action: ActionKind,
        x: f64,
        y: f64,
        epsilon: f64,
        refit: bool,
        window_mean: Option<f64>,
        prediction: Option<f64>,
    },
}

/// Replayable record of one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<LogRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn header(&self) -> Option<&LogHeader> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header(h) => Some(h.as_ref()),
            _ => None,
        })
    }

    pub fn waypoints(&self) -> impl Iterator<Item = (&u32, &ActionKind, Position)> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Waypoint { n, action, x, y, .. } => {
                Some((n, action, Position::new(*x, *y)))
            }
            _ => None,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.records.iter().filter(|r| matches!(r, LogRecord::Sample { .. })).count()
    }

    pub fn refit_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, LogRecord::Refit { ok: true, .. }))
            .count()
    }

    pub fn final_position(&self) -> Option<Position> {
        self.waypoints().last().map(|(_, _, p)| p)
    }
}

/// Everything an episode runs against. The same context with different
/// seeds gives independent, reproducible runs.
#[derive(Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub grid: &'a OccupancyGrid,
    pub footprint: &'a RobotFootprint,
    pub env: &'a RfEnvironment,
    pub target: &'a TargetSpec,
    pub model: &'a ModelParams,
    pub config: &'a SeekerConfig,
    pub start: Position,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("start position is not legal on the map")]
    IllegalStart,
    #[error("target references unknown transmitter id {0}")]
    UnknownTargetNode(u32),
    #[error("no legal lattice positions on this map")]
    NoLegalPositions,
    #[error("invalid seeker config: {0}")]
    BadConfig(String),
}

/// Final numbers of one episode, computed while it ran.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub seed: u64,
    pub iterations: u32,
    pub path_length_m: f64,
    pub refit_count: u32,
    pub final_position: Position,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub log: TrajectoryLog,
    pub stats: EpisodeStats,
}

/// Run one internal-model episode. Deterministic in (context, seed).
pub fn run_episode(ctx: &EpisodeContext, seed: u64) -> Result<EpisodeOutcome, EpisodeError> {
    Episode::new(ctx, seed, Strategy::InternalModel)?.run()
}

/// Run one gradient-ascent baseline episode with the same movement and
/// sampling machinery; the model parameters in the context are unused.
pub fn run_gradient_episode(
    ctx: &EpisodeContext,
    seed: u64,
) -> Result<EpisodeOutcome, EpisodeError> {
    Episode::new(ctx, seed, Strategy::GradientBaseline)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    InternalModel,
    GradientBaseline,
}

struct Episode<'a> {
    ctx: &'a EpisodeContext<'a>,
    strategy: Strategy,
    seed: u64,
    lattice: LegalLattice,
    state: SeekerState,
    records: Vec<LogRecord>,
    path_length: f64,
    stop_target: Option<(Position, f64)>,
}

impl<'a> Episode<'a> {
    fn new(
        ctx: &'a EpisodeContext<'a>,
        seed: u64,
        strategy: Strategy,
    ) -> Result<Self, EpisodeError> {
        ctx.config.validate().map_err(EpisodeError::BadConfig)?;
        if !ctx.grid.is_legal(ctx.footprint, ctx.start) {
            return Err(EpisodeError::IllegalStart);
        }
        for id in ctx.target.node_ids() {
            if ctx.env.node(id).is_none() {
                return Err(EpisodeError::UnknownTargetNode(id));
            }
        }
        let lattice =
            LegalLattice::build(ctx.grid, ctx.footprint, ctx.config.greedy_grid_resolution);
        if lattice.is_empty() {
            return Err(EpisodeError::NoLegalPositions);
        }
        let stop_target = ctx.config.stop_radius.map(|r| {
            let opt = targets::optimum(ctx.env, ctx.target, lattice.points())
                .expect("non-empty lattice has an argmax");
            (opt, r)
        });
        let mut records = Vec::new();
        records.push(LogRecord::Header(Box::new(LogHeader {
            strategy: match strategy {
                Strategy::InternalModel => "internal_model".to_string(),
                Strategy::GradientBaseline => "gradient_baseline".to_string(),
            },
            seed,
            start: ctx.start,
            target: *ctx.target,
            model: match strategy {
                Strategy::InternalModel => Some(*ctx.model),
                Strategy::GradientBaseline => None,
            },
            seeker: *ctx.config,
            propagation: ctx.env.config().clone(),
            transmitters: ctx.env.nodes().to_vec(),
            footprint_radius: ctx.footprint.radius,
            map_resolution: ctx.grid.resolution(),
            map_width: ctx.grid.width(),
            map_height: ctx.grid.height(),
            map_origin: ctx.grid.origin(),
        })));
        Ok(Self {
            ctx,
            strategy,
            seed,
            lattice,
            state: SeekerState::new(ctx.start, seed),
            records,
            path_length: 0.0,
            stop_target,
        })
    }

    fn run(mut self) -> Result<EpisodeOutcome, EpisodeError> {
        let cfg = self.ctx.config;
        if let Err(reason) = self.initial_movement() {
            return Ok(self.finish(true, Some(reason)));
        }
        while self.state.n < cfg.max_iterations {
            if let Some((opt, radius)) = self.stop_target {
                if self.state.position.distance_to(opt) <= radius {
                    break;
                }
            }
            let step = match self.strategy {
                Strategy::InternalModel => self.model_iteration(),
                Strategy::GradientBaseline => self.gradient_iteration(),
            };
            if let Err(reason) = step {
                return Ok(self.finish(true, Some(reason)));
            }
            self.state.n += 1;
        }
        Ok(self.finish(false, None))
    }

    fn model_iteration(&mut self) -> Result<(), String> {
        let cfg = self.ctx.config;
        let before = self.state.now;
        let val = self.validate_with_dwell()?;
        if val.refit {
            self.records.push(LogRecord::Refit {
                n: self.state.n,
                t: self.state.now,
                x: self.state.position.x,
                y: self.state.position.y,
                window_mean: val.window_mean,
                prediction: val.prediction,
                ok: val.refit_ok,
            });
        }
        let eps = epsilon(self.state.n, cfg);
        let draw: f64 = self.state.rng.gen();
        self.records.push(LogRecord::EpsilonDraw { n: self.state.n, epsilon: eps, draw });

        // A failed refit (or no model yet) forces a novelty step.
        let forced_novelty = self.state.model.is_none() || (val.refit && !val.refit_ok);
        let (action, waypoint) = if !forced_novelty && draw > eps {
            match greedy_waypoint(&mut self.state, cfg, self.ctx.grid, self.ctx.footprint, &self.lattice)
            {
                Some(p) => (ActionKind::Greedy, p),
                None => return Err("no legal waypoint reachable".to_string()),
            }
        } else {
            match novelty_waypoint(&mut self.state, cfg, &self.lattice) {
                Some(p) => (ActionKind::Epsilon, p),
                None => return Err("no novelty candidates on the map".to_string()),
            }
        };
        self.execute_move(waypoint, action, eps, Some(&val))?;
        // The robot is always listening: an iteration that did not move
        // (waypoint at the current position) still takes wall time, and
        // packets keep arriving while the model maximum is held.
        if self.state.now == before {
            self.dwell();
        }
        Ok(())
    }

    fn gradient_iteration(&mut self) -> Result<(), String> {
        let cfg = self.ctx.config;
        let waypoint =
            gradient_baseline_step(&mut self.state, cfg, self.ctx.grid, self.ctx.footprint)
                .ok_or_else(|| "no legal gradient step".to_string())?;
        self.execute_move(waypoint, ActionKind::Gradient, 0.0, None)
    }

    fn validate_with_dwell(&mut self) -> Result<Validation, String> {
        for _ in 0..MAX_VALIDATION_DWELLS {
            match validate_and_maybe_refit(&mut self.state, self.ctx.config, self.ctx.model) {
                Ok(v) => return Ok(v),
                // Wait one window in place and retry.
                Err(NoRecentSamples) => self.dwell(),
            }
        }
        Err("no samples arrived while dwelling".to_string())
    }

    fn execute_move(
        &mut self,
        mut waypoint: Position,
        mut action: ActionKind,
        eps: f64,
        val: Option<&Validation>,
    ) -> Result<(), String> {
        let cfg = self.ctx.config;
        for _ in 0..=MAX_NOPATH_REDRAWS {
            match self.ctx.grid.plan_path(self.ctx.footprint, self.state.position, waypoint) {
                Ok(path) => {
                    self.records.push(LogRecord::Waypoint {
                        n: self.state.n,
                        t: self.state.now,
                        action,
                        x: waypoint.x,
                        y: waypoint.y,
                        epsilon: eps,
                        refit: val.map_or(false, |v| v.refit),
                        window_mean: val.map(|v| v.window_mean),
                        prediction: val.and_then(|v| v.prediction),
                    });
                    self.travel(&path);
                    return Ok(());
                }
                Err(PlanError::NoPath) => {
                    // Unreachable waypoint: redraw a novelty step.
                    action = match self.strategy {
                        Strategy::InternalModel => ActionKind::Epsilon,
                        Strategy::GradientBaseline => ActionKind::Gradient,
                    };
                    waypoint = match novelty_waypoint(&mut self.state, cfg, &self.lattice) {
                        Some(p) => p,
                        None => return Err("no novelty candidates on the map".to_string()),
                    };
                }
            }
        }
        Err(format!("no reachable waypoint after {MAX_NOPATH_REDRAWS} redraws"))
    }

    fn travel(&mut self, path: &[Position]) {
        let cfg = self.ctx.config;
        let mut raw: Vec<Sample> = Vec::new();
        for seg in path.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = a.distance_to(b);
            if len == 0.0 {
                continue;
            }
            raw.extend(self.ctx.env.stream_along(a, b, cfg.speed, self.state.now, &mut self.state.rng));
            self.state.now += len / cfg.speed;
            self.path_length += len;
            self.state.trajectory.push((self.state.now, b));
        }
        if let Some(&last) = path.last() {
            self.state.position = last;
        }
        self.ingest(&raw);
    }

    fn dwell(&mut self) {
        let cfg = self.ctx.config;
        let raw = self.ctx.env.stream_dwell(
            self.state.position,
            cfg.validation_window,
            self.state.now,
            &mut self.state.rng,
        );
        self.state.now += cfg.validation_window;
        self.ingest(&raw);
    }

    fn ingest(&mut self, raw: &[Sample]) {
        let paired = targets::pair_samples(self.ctx.target, raw, self.ctx.config.pairing_window);
        for ts in &paired {
            self.records.push(LogRecord::Sample {
                t: ts.t,
                x: ts.position.x,
                y: ts.position.y,
                value: ts.value,
            });
        }
        self.state.samples.extend(paired);
    }

    fn initial_movement(&mut self) -> Result<(), String> {
        let cfg = self.ctx.config;
        let range = cfg.initial_step_factor * cfg.step_width;
        let current = self.state.position;
        let candidates: Vec<Position> = self
            .lattice
            .points()
            .iter()
            .copied()
            .filter(|p| {
                let d = p.distance_to(current);
                d > 0.0 && d <= range
            })
            .collect();
        // Flat prior over all in-range options; fall back to any legal point.
        let waypoint = if candidates.is_empty() {
            let any: Vec<Position> = self
                .lattice
                .points()
                .iter()
                .copied()
                .filter(|p| p.distance_to(current) > 0.0)
                .collect();
            if any.is_empty() {
                return Err("no legal initial movement".to_string());
            }
            any[self.state.rng.gen_range(0..any.len())]
        } else {
            candidates[self.state.rng.gen_range(0..candidates.len())]
        };
        self.execute_move(waypoint, ActionKind::Initial, 1.0, None)
    }

    fn finish(self, aborted: bool, abort_reason: Option<String>) -> EpisodeOutcome {
        let stats = EpisodeStats {
            seed: self.seed,
            iterations: self.state.n,
            path_length_m: self.path_length,
            refit_count: self.state.refit_events.len() as u32,
            final_position: self.state.position,
            aborted,
            abort_reason,
        };
        EpisodeOutcome { log: TrajectoryLog { records: self.records }, stats }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_matches_annealing() {
        let cfg = SeekerConfig::default();
        assert!((epsilon(0, &cfg) - 1.0).abs() < 1e-9);
        assert!((epsilon(5, &cfg) - 0.5).abs() < 1e-9);
        assert!(epsilon(100, &cfg) - 0.1 < 1e-6);
    }

    #[test]
    fn epsilon_is_strictly_decreasing_and_bounded() {
        let cfg = SeekerConfig::default();
        let mut last = f64::INFINITY;
        for n in 0..200 {
            let e = epsilon(n, &cfg);
            assert!(e < last);
            assert!(e >= cfg.epsilon_floor && e <= 1.0);
            last = e;
        }
    }
}
