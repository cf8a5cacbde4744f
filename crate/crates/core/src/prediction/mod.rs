//! Plan-conditioned multi-modal prediction of surrounding agents.
//!
//! Every backend returns a [`PredictedFutures`]: `K` joint futures, each a
//! per-agent, per-step axis-aligned Gaussian, with one probability per future.
//! The kinematic backends (CTRV and plan-reactive IDM) emit a single future
//! replicated `K` times with uniform probabilities and floor sigmas.

pub mod cmp;
pub mod ctrv;
pub mod idm;
mod params_io;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::ReferencePath;
use crate::geometry::{Point2, Pose};
use crate::scenario::{AgentKind, AgentState, MapModel, Scenario};
use crate::{MAX_AGENTS, NUM_MODES, T_F, T_H};

pub use cmp::{CmpModelParams, CmpLayout};
pub use ctrv::{ctrv_rollout, CtrvState};
pub use idm::{idm_acceleration, idm_reactive_rollout, IdmParams};
pub use params_io::{read_params, write_params, PARAMS_MAGIC};
pub use train::{cmp_loss, cmp_train, CmpSample, CmpTrainConfig, TrainReport};

/// Lower sigma bound (m). Kinematic backends report exactly this value.
pub const SIGMA_FLOOR: f64 = 1e-2;
/// Upper sigma bound (m).
pub const SIGMA_CEIL: f64 = 1e2;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("learned backend requires model parameters")]
    MissingParams,
    #[error("parameter shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("parameters were built for a different configuration: {0}")]
    ConfigMismatch(String),
    #[error("plan must have {expected} states, got {got}")]
    InvalidPlan { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step} (last finite loss {last_finite:?})")]
    NonFiniteLoss { step: usize, last_finite: Option<f64> },
    #[error("malformed parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ctrv,
    IdmReactive,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Early,
    Late,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub backend: Backend,
    pub fusion: Fusion,
    pub num_modes: usize,
    pub max_agents: usize,
    pub embed_dim: usize,
    pub rng_seed: u64,
    pub idm: IdmParams,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Ctrv,
            fusion: Fusion::Early,
            num_modes: NUM_MODES,
            max_agents: MAX_AGENTS,
            embed_dim: 32,
            rng_seed: 0,
            idm: IdmParams::default(),
        }
    }
}

impl PredictorConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PredictionError> {
        if self.num_modes < 1 {
            return Err(PredictionError::ConfigMismatch("num_modes must be >= 1".into()));
        }
        if self.embed_dim < 8 {
            return Err(PredictionError::ConfigMismatch("embed_dim must be >= 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2 {
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
}

impl Gaussian2 {
    pub fn mean(&self) -> Point2 {
        Point2::new(self.mu_x, self.mu_y)
    }
}

/// `K` joint futures of `N` agents over `T_F` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedFutures {
    /// Indexed `[mode][agent][step]`.
    pub modes: Vec<Vec<Vec<Gaussian2>>>,
    pub mode_probs: Vec<f64>,
}

impl PredictedFutures {
    pub fn empty(num_modes: usize) -> Self {
        Self {
            modes: vec![Vec::new(); num_modes],
            mode_probs: vec![1.0 / num_modes as f64; num_modes],
        }
    }

    /// Deterministic tracks replicated over `num_modes` futures with uniform
    /// probabilities and floor sigmas.
    pub fn from_tracks(tracks: &[Vec<Point2>], num_modes: usize) -> Self {
        let mode: Vec<Vec<Gaussian2>> = tracks
            .iter()
            .map(|track| {
                track
                    .iter()
                    .map(|p| Gaussian2 {
                        mu_x: p.x,
                        sigma_x: SIGMA_FLOOR,
                        mu_y: p.y,
                        sigma_y: SIGMA_FLOOR,
                    })
                    .collect()
            })
            .collect();
        Self {
            modes: vec![mode; num_modes],
            mode_probs: vec![1.0 / num_modes as f64; num_modes],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.mode_probs.len()
    }

    pub fn num_agents(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, mode: usize, agent: usize, step: usize) -> Point2 {
        self.modes[mode][agent][step].mean()
    }

    /// Checks normalization, sigma bounds and shape.
    pub fn check(&self, horizon: usize) -> Result<(), String> {
        let sum: f64 = self.mode_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.mode_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("mode probabilities {:?} are not normalized", self.mode_probs));
        }
        if self.modes.len() != self.mode_probs.len() {
            return Err("mode count mismatch".into());
        }
        let n = self.num_agents();
        for mode in &self.modes {
            if mode.len() != n {
                return Err("agent count differs between modes".into());
            }
            for track in mode {
                if track.len() != horizon {
                    return Err(format!("track has {} steps, expected {horizon}", track.len()));
                }
                for g in track {
                    if !(g.sigma_x > 0.0 && g.sigma_y > 0.0) || !g.mu_x.is_finite() || !g.mu_y.is_finite() {
                        return Err(format!("invalid Gaussian {g:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Observed history of one agent, steps `0 ..= T_H` of a scenario window.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    pub id: u64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub states: Vec<AgentState>,
}

impl AgentHistory {
    pub fn current(&self) -> &AgentState {
        self.states.last().unwrap()
    }
}

/// Everything a predictor may see: histories up to the current step and the
/// map. Futures are not carried over from the scenario.
#[derive(Debug, Clone)]
pub struct SceneContext {
    pub av: AgentHistory,
    pub agents: Vec<AgentHistory>,
    /// Scenario index of each entry in `agents`.
    pub agent_indices: Vec<usize>,
    pub map: MapModel,
    pub lane_paths: Vec<(usize, ReferencePath)>,
}

impl SceneContext {
    /// Keeps at most `max_agents` non-AV agents, nearest to the AV first, in
    /// scenario order.
    pub fn from_scenario(scenario: &Scenario, max_agents: usize) -> Self {
        let history = |i: usize| {
            let track = &scenario.agents[i];
            AgentHistory {
                id: track.id,
                kind: track.kind,
                length: track.length,
                width: track.width,
                states: (0..=T_H).map(|t| track.state(t)).collect(),
            }
        };
        let av_pos = scenario.av_current().position();
        let mut others = scenario.other_indices();
        others.sort_by(|&a, &b| {
            let da = scenario.agents[a].state(T_H).position().distance(av_pos);
            let db = scenario.agents[b].state(T_H).position().distance(av_pos);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        others.truncate(max_agents);
        others.sort_unstable();
        let lane_paths = scenario
            .map
            .lanes
            .iter()
            .filter_map(|l| l.reference_path().ok().map(|p| (l.id, p)))
            .collect();
        Self {
            av: history(scenario.av_index),
            agents: others.iter().map(|&i| history(i)).collect(),
            agent_indices: others,
            map: scenario.map.clone(),
            lane_paths,
        }
    }

    /// Ground-truth futures of the retained agents, aligned with `agents`.
    pub fn truth_futures(&self, scenario: &Scenario) -> Vec<Vec<Point2>> {
        self.agent_indices
            .iter()
            .map(|&i| scenario.agents[i].future().iter().map(Pose::position).collect())
            .collect()
    }

    /// Lane whose centerline is closest to `state` and roughly aligned with its
    /// heading, with the agent's arc length and lateral offset on it.
    pub fn assign_lane(&self, state: &AgentState, max_offset: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, (_, path)) in self.lane_paths.iter().enumerate() {
            let Ok(st) = path.cartesian_to_frenet(&state.pose(), 0.0) else {
                continue;
            };
            if st.d.abs() > max_offset {
                continue;
            }
            let heading = path.point_at(st.s).heading;
            if state.speed > 0.5 && crate::geometry::wrap_angle(state.heading - heading).cos() < 0.5 {
                continue;
            }
            if best.map_or(true, |b| st.d.abs() < b.2.abs()) {
                best = Some((k, st.s, st.d));
            }
        }
        best
    }
}

fn check_plan(plan: &[Pose]) -> Result<(), PredictionError> {
    if plan.len() != T_F {
        return Err(PredictionError::InvalidPlan {
            expected: T_F,
            got: plan.len(),
        });
    }
    Ok(())
}

/// Predicts futures of `ctx.agents` given one AV plan of `T_F` poses.
pub fn predict(
    ctx: &SceneContext,
    plan: &[Pose],
    cfg: &PredictorConfig,
    params: Option<&CmpModelParams>,
) -> Result<PredictedFutures, PredictionError> {
    cfg.validate()?;
    check_plan(plan)?;
    if ctx.agents.is_empty() {
        return Ok(PredictedFutures::empty(cfg.num_modes));
    }
    match cfg.backend {
        Backend::Ctrv => Ok(ctrv::predict_ctrv(ctx, cfg.num_modes)),
        Backend::IdmReactive => {
            let tracks = idm_reactive_rollout(ctx, plan, &cfg.idm);
            Ok(PredictedFutures::from_tracks(&tracks, cfg.num_modes))
        }
        Backend::Learned => {
            let params = params.ok_or(PredictionError::MissingParams)?;
            params.check_config(cfg)?;
            let context = cmp::encode_context(params, ctx);
            Ok(cmp::decode_plan(params, ctx, &context, plan).futures)
        }
    }
}

/// Predictions for several plans against one scene. The scene encoding is
/// shared; only plan-dependent stages run per plan. Results match calling
/// [`predict`] on each plan.
pub fn predict_batch<P: AsRef<[Pose]>>(
    ctx: &SceneContext,
    plans: &[P],
    cfg: &PredictorConfig,
    params: Option<&CmpModelParams>,
) -> Result<Vec<PredictedFutures>, PredictionError> {
    cfg.validate()?;
    for plan in plans {
        check_plan(plan.as_ref())?;
    }
    if plans.is_empty() {
        return Ok(Vec::new());
    }
    if ctx.agents.is_empty() {
        return Ok(vec![PredictedFutures::empty(cfg.num_modes); plans.len()]);
    }
    match cfg.backend {
        Backend::Ctrv => {
            let shared = ctrv::predict_ctrv(ctx, cfg.num_modes);
            Ok(vec![shared; plans.len()])
        }
        Backend::IdmReactive => Ok(plans
            .iter()
            .map(|p| {
                let tracks = idm_reactive_rollout(ctx, p.as_ref(), &cfg.idm);
                PredictedFutures::from_tracks(&tracks, cfg.num_modes)
            })
            .collect()),
        Backend::Learned => {
            let params = params.ok_or(PredictionError::MissingParams)?;
            params.check_config(cfg)?;
            let context = cmp::encode_context(params, ctx);
            Ok(plans
                .iter()
                .map(|p| cmp::decode_plan(params, ctx, &context, p.as_ref()).futures)
                .collect())
        }
    }
}
