//! Generate, predict, featurize and rank for one scene.

use thiserror::Error;

use crate::features::{compute_features, FeatureConfig, FeatureVector};
use crate::generation::{generate_proposals, EgoLane, GenerationError, TrajectoryProposal};
use crate::geometry::Pose;
use crate::irl::{label_demo, select_behavior, CostWeights, IrlSample};
use crate::prediction::{predict, predict_batch, CmpModelParams, PredictedFutures, PredictionError, PredictorConfig, SceneContext};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Where futures of the other agents come from.
#[derive(Debug, Clone)]
pub enum PredictorSource {
    Model {
        cfg: PredictorConfig,
        params: Option<CmpModelParams>,
    },
    /// The logged futures, identical for every plan.
    GroundTruth { num_modes: usize },
}

impl PredictorSource {
    pub fn model(cfg: PredictorConfig) -> Self {
        Self::Model { cfg, params: None }
    }

    pub fn max_agents(&self) -> usize {
        match self {
            Self::Model { cfg, .. } => cfg.max_agents,
            Self::GroundTruth { .. } => crate::MAX_AGENTS,
        }
    }

    /// Futures for each plan; `batch` selects shared-context batched
    /// inference for model backends.
    pub fn predict_plans(
        &self,
        scenario: &Scenario,
        ctx: &SceneContext,
        plans: &[Vec<Pose>],
        batch: bool,
    ) -> Result<Vec<PredictedFutures>, PredictionError> {
        match self {
            Self::Model { cfg, params } => {
                if batch {
                    predict_batch(ctx, plans, cfg, params.as_ref())
                } else {
                    plans.iter().map(|p| predict(ctx, p, cfg, params.as_ref())).collect()
                }
            }
            Self::GroundTruth { num_modes } => {
                let truth = PredictedFutures::from_tracks(&ctx.truth_futures(scenario), *num_modes);
                Ok(vec![truth; plans.len()])
            }
        }
    }
}

/// Proposals of one scene with their futures and features; independent of
/// the cost weights.
#[derive(Debug, Clone)]
pub struct SceneEvaluation {
    pub ego: EgoLane,
    pub ctx: SceneContext,
    pub proposals: Vec<TrajectoryProposal>,
    pub futures: Vec<PredictedFutures>,
    pub features: Vec<FeatureVector>,
}

impl SceneEvaluation {
    /// IRL sample labelled with the proposal whose endpoint is nearest the
    /// AV's logged endpoint.
    pub fn irl_sample(&self, scenario: &Scenario) -> IrlSample {
        let ends: Vec<_> = self.proposals.iter().map(|p| p.endpoint().position()).collect();
        let truth = scenario.av_future().last().unwrap().position();
        IrlSample::new(&self.features, label_demo(&ends, truth))
    }
}

#[derive(Debug, Clone)]
pub struct Planner {
    pub source: PredictorSource,
    pub features: FeatureConfig,
    pub weights: CostWeights,
    pub batch: bool,
}

impl Planner {
    pub fn new(source: PredictorSource, weights: CostWeights) -> Self {
        Self { source, features: FeatureConfig::default(), weights, batch: true }
    }

    pub fn evaluate_scene(&self, scenario: &Scenario) -> Result<SceneEvaluation, PlanError> {
        let ego = EgoLane::from_scenario(scenario)?;
        let proposals = generate_proposals(scenario, &ego)?;
        let ctx = SceneContext::from_scenario(scenario, self.source.max_agents());
        let plans: Vec<Vec<Pose>> = proposals.iter().map(|p| p.states.clone()).collect();
        let futures = self.source.predict_plans(scenario, &ctx, &plans, self.batch)?;
        let features = proposals
            .iter()
            .zip(&futures)
            .map(|(p, f)| compute_features(p, &ego.path, &ctx, f, &self.features))
            .collect();
        Ok(SceneEvaluation { ego, ctx, proposals, futures, features })
    }

    /// Proposal indices with probabilities, most likely first.
    pub fn rank(&self, eval: &SceneEvaluation) -> Vec<(usize, f64)> {
        select_behavior(&eval.features, &self.weights)
    }

    pub fn plan(&self, scenario: &Scenario) -> Result<(SceneEvaluation, Vec<(usize, f64)>), PlanError> {
        let eval = self.evaluate_scene(scenario)?;
        let ranking = self.rank(&eval);
        Ok((eval, ranking))
    }
}
