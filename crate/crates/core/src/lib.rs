//! Behavior planning with Frenet-frame candidate generation, plan-conditioned
//! multi-modal prediction of surrounding agents, and a linear cost whose
//! weights are learned by maximum-entropy inverse reinforcement learning.
//!
//! The pipeline for one scene is
//! [`generation::generate_proposals`] -> [`prediction::predict_batch`] ->
//! [`features::compute_features`] -> [`irl::select_behavior`];
//! [`pipeline::Planner`] wires those steps together.

pub mod evaluation;
pub mod features;
pub mod frenet;
pub mod generation;
pub mod geometry;
pub mod irl;
pub mod optim;
pub mod pipeline;
pub mod prediction;
pub mod scenario;

pub use features::{FeatureConfig, FeatureVector};
pub use frenet::{FrenetState, ReferencePath};
pub use generation::{Maneuver, TrajectoryProposal};
pub use geometry::{Point2, Pose};
pub use irl::{CostWeights, IrlTrainConfig};
pub use pipeline::{Planner, PredictorSource};
pub use prediction::{Backend, Fusion, PredictedFutures, PredictorConfig};
pub use scenario::{AgentKind, AgentState, AgentTrack, MapModel, Scenario};

/// Sampling interval of tracks and proposals (s).
pub const DT: f64 = 0.1;
/// Planning and prediction horizon (s).
pub const HORIZON: f64 = 5.0;
/// History steps before the current one.
pub const T_H: usize = 20;
/// Future steps after the current one.
pub const T_F: usize = 50;
/// History, current step and future.
pub const TRACK_LEN: usize = T_H + T_F + 1;
/// Per-step plan features fed to the learned predictor (position and velocity).
pub const PLAN_DIM: usize = 4;
/// Default number of predicted joint futures.
pub const NUM_MODES: usize = 3;
/// Default number of surrounding agents considered.
pub const MAX_AGENTS: usize = 10;
/// Terminal speed targets per lateral maneuver.
pub const NUM_SPEED_TARGETS: usize = 10;
