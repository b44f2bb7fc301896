//! Source seeking for mobile wireless network nodes.
//!
//! A robot that measures only scalar samples of a signal field (per-packet
//! RSSI, or compound metrics built from several nodes) seeks the field's
//! maximum by keeping an internal forward model of the field, validating it
//! online against fresh measurements, and choosing actions epsilon-greedily
//! with novelty-driven random exploration. This crate packages that
//! algorithm together with everything needed to exercise it at desk scale:
//!
//! - [`world`]: occupancy-grid maps, footprint legality, A* path planning;
//! - [`rf_env`]: seeded stochastic RF fields (log-distance path loss,
//!   log-normal shadowing, frozen small-scale fading) emitting packetized
//!   RSSI streams along trajectories;
//! - [`models`]: the internal-model implementations (local ridge regression
//!   and a from-scratch 2-100-1 MLP) plus training-set subsampling;
//! - [`targets`]: single-node and two-node bridging target functions;
//! - [`seeker`]: the meta-algorithm, episode runner, and replayable
//!   trajectory logs, plus a gradient-ascent baseline;
//! - [`harness`]: config files, single/batch/comparison experiment runners,
//!   and field-map exports.
//!
//! See the `examples/` directory for runnable entry points, and the
//! `rfseek` binary for the command-line harness.

pub mod harness;
pub mod models;
pub mod rf_env;
pub mod seeker;
pub mod targets;
pub mod world;

pub use models::{FitError, ForwardModel, ModelParams, MlpParams, RidgeParams, TrainingSet};
pub use rf_env::{PropagationConfig, RfEnvironment, Sample, TransmitterNode};
pub use seeker::{
    run_episode, run_gradient_episode, EpisodeContext, EpisodeOutcome, SeekerConfig, TrajectoryLog,
};
pub use targets::{TargetSample, TargetSpec};
pub use world::{LegalLattice, OccupancyGrid, Position, RobotFootprint};
