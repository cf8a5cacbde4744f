//! Loss and training for the learned predictor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cmp::{self, CmpModelParams, ContextEncoding};
use super::{PredictedFutures, PredictionError, PredictorConfig, SceneContext};
use crate::geometry::{Point2, Pose};
use crate::optim::{clip_grad_norm, step_decay, Adam, AdamConfig};
use crate::scenario::Scenario;

/// Joint best-mode Gaussian NLL plus the mode cross entropy.
///
/// The best mode minimizes the summed Euclidean error of the means over all
/// agents and steps. The NLL term is averaged over agents and steps. Returns
/// the loss and the best mode index.
pub fn cmp_loss(pred: &PredictedFutures, truth: &[Vec<Point2>]) -> (f64, usize) {
    let err = |m: usize| -> f64 {
        pred.modes[m]
            .iter()
            .zip(truth)
            .flat_map(|(track, t)| track.iter().zip(t).map(|(g, y)| g.mean().distance(*y)))
            .sum()
    };
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for m in 0..pred.num_modes() {
        let e = err(m);
        if e < best_err {
            best = m;
            best_err = e;
        }
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    for (track, t) in pred.modes[best].iter().zip(truth) {
        for (g, y) in track.iter().zip(t) {
            let rx = (y.x - g.mu_x) / g.sigma_x;
            let ry = (y.y - g.mu_y) / g.sigma_y;
            nll += g.sigma_x.ln() + g.sigma_y.ln() + 0.5 * (rx * rx + ry * ry);
            count += 1;
        }
    }
    let nll = if count > 0 { nll / count as f64 } else { 0.0 };
    (nll - pred.mode_probs[best].ln(), best)
}

/// One training example: the scene, the AV's ground-truth future used as the
/// plan, and the retained agents' ground-truth futures.
#[derive(Debug, Clone)]
pub struct CmpSample {
    pub ctx: SceneContext,
    pub plan: Vec<Pose>,
    pub truth: Vec<Vec<Point2>>,
}

impl CmpSample {
    /// `None` when the scene has no agents besides the AV.
    pub fn from_scenario(scenario: &Scenario, max_agents: usize) -> Option<Self> {
        let ctx = SceneContext::from_scenario(scenario, max_agents);
        if ctx.agents.is_empty() {
            return None;
        }
        Some(Self {
            truth: ctx.truth_futures(scenario),
            plan: scenario.av_future(),
            ctx,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmpTrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_every_epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for CmpTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            decay: 0.5,
            decay_every_epochs: 5,
            batch_size: 32,
            clip_norm: 5.0,
            steps: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full-dataset loss before the first update.
    pub initial_loss: f64,
    /// Full-dataset loss after the last update.
    pub final_loss: f64,
    /// `(step, minibatch loss, learning rate)`.
    pub history: Vec<(usize, f64, f64)>,
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    origins: Vec<Point2>,
    plan_in: Vec<f64>,
    truth: Vec<Vec<Point2>>,
}

fn prepare(s: &CmpSample) -> Prepared {
    Prepared {
        inputs: (0..s.ctx.agents.len()).map(|i| cmp::agent_input(&s.ctx, i)).collect(),
        origins: s.ctx.agents.iter().map(|a| a.current().position()).collect(),
        plan_in: cmp::plan_input(&s.ctx, &s.plan),
        truth: s.truth.clone(),
    }
}

fn forward(params: &CmpModelParams, p: &Prepared) -> (ContextEncoding, cmp::Decoded) {
    let enc = cmp::encode_inputs(params, p.inputs.clone(), p.origins.clone());
    let dec = cmp::decode_input(params, &enc, p.plan_in.clone());
    (enc, dec)
}

fn batch_loss(params: &CmpModelParams, batch: &[&Prepared]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|p| cmp_loss(&forward(params, p).1.futures, &p.truth).0)
        .sum();
    total / batch.len() as f64
}

fn batch_loss_and_grad(params: &CmpModelParams, batch: &[&Prepared]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.values.len()];
    let mut total = 0.0;
    for p in batch {
        let (enc, dec) = forward(params, p);
        let (loss, _, dy) = cmp::loss_and_output_grad(&dec, &p.truth);
        total += loss;
        cmp::backward(params, &enc, &dec, &dy, &mut grad);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    (total * inv, grad)
}

/// Mean loss over `samples`.
pub fn cmp_dataset_loss(params: &CmpModelParams, samples: &[CmpSample]) -> f64 {
    let prepared: Vec<Prepared> = samples.iter().map(prepare).collect();
    batch_loss(params, &prepared.iter().collect::<Vec<_>>())
}

/// Mean loss over `samples` and its analytic gradient.
pub fn cmp_loss_and_grad(params: &CmpModelParams, samples: &[CmpSample]) -> (f64, Vec<f64>) {
    let prepared: Vec<Prepared> = samples.iter().map(prepare).collect();
    batch_loss_and_grad(params, &prepared.iter().collect::<Vec<_>>())
}

/// Trains from `CmpModelParams::init(cfg)` with Adam, gradient norm
/// clipping and step decay of the learning rate.
pub fn cmp_train(
    samples: &[CmpSample],
    cfg: &PredictorConfig,
    train: &CmpTrainConfig,
) -> Result<(CmpModelParams, TrainReport), PredictionError> {
    cmp_train_from(CmpModelParams::init(cfg), samples, train)
}

pub fn cmp_train_from(
    mut params: CmpModelParams,
    samples: &[CmpSample],
    train: &CmpTrainConfig,
) -> Result<(CmpModelParams, TrainReport), PredictionError> {
    if samples.is_empty() {
        return Err(PredictionError::EmptyDataset);
    }
    params.check_len()?;
    let prepared: Vec<Prepared> = samples.iter().map(prepare).collect();
    let all: Vec<&Prepared> = prepared.iter().collect();
    let initial_loss = batch_loss(&params, &all);
    if !initial_loss.is_finite() {
        return Err(PredictionError::NonFiniteLoss { step: 0, last_finite: None });
    }

    let batch_size = train.batch_size.clamp(1, prepared.len());
    let per_epoch = prepared.len().div_ceil(batch_size);
    let decay_every = (train.decay_every_epochs * per_epoch).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut cursor = order.len();
    let mut adam = Adam::new(params.values.len(), AdamConfig::default());
    let mut history = Vec::with_capacity(train.steps);
    let mut last_finite = Some(initial_loss);

    for step in 0..train.steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<&Prepared> = order[cursor..cursor + batch_size].iter().map(|&i| &prepared[i]).collect();
        cursor += batch_size;
        let (loss, mut grad) = batch_loss_and_grad(&params, &batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PredictionError::NonFiniteLoss { step, last_finite });
        }
        last_finite = Some(loss);
        clip_grad_norm(&mut grad, train.clip_norm);
        let lr = step_decay(train.learning_rate, train.decay, decay_every, step);
        adam.step(&mut params.values, &grad, lr);
        history.push((step, loss, lr));
    }

    let final_loss = batch_loss(&params, &all);
    if !final_loss.is_finite() {
        return Err(PredictionError::NonFiniteLoss { step: train.steps, last_finite });
    }
    Ok((params, TrainReport { initial_loss, final_loss, history }))
}
