//! Linear costs, the maximum-entropy distribution over proposals and
//! weight learning from demonstrations.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_NAMES, NUM_FEATURES};
use crate::geometry::Point2;
use crate::optim::{step_decay, Adam, AdamConfig};

#[derive(Debug, Error, PartialEq)]
pub enum IrlError {
    #[error("scenario {index} has {proposals} proposals; at least 2 are needed")]
    DegenerateScenario { index: usize, proposals: usize },
    #[error("scenario {index}: demo label {label} out of range for {proposals} proposals")]
    InvalidLabel { index: usize, label: usize, proposals: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("malformed weights file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostWeights(pub [f64; NUM_FEATURES]);

impl CostWeights {
    pub fn zeros() -> Self {
        Self([0.0; NUM_FEATURES])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.map(|w| w * c))
    }
}

/// One `name value` line per feature.
impl fmt::Display for CostWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, w) in FEATURE_NAMES.iter().zip(self.0) {
            writeln!(f, "{name} {w:?}")?;
        }
        Ok(())
    }
}

impl FromStr for CostWeights {
    type Err = IrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lines: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != NUM_FEATURES {
            return Err(IrlError::Format(format!("expected {NUM_FEATURES} lines, got {}", lines.len())));
        }
        let mut w = [0.0f64; NUM_FEATURES];
        for (i, line) in lines.iter().enumerate() {
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(IrlError::Format(format!("line {}: expected `name value`", i + 1)));
            };
            if name != FEATURE_NAMES[i] {
                return Err(IrlError::Format(format!("line {}: expected {}, got {name}", i + 1, FEATURE_NAMES[i])));
            }
            w[i] = value
                .parse()
                .map_err(|e| IrlError::Format(format!("line {}: {e}", i + 1)))?;
            if !w[i].is_finite() {
                return Err(IrlError::Format(format!("line {}: non-finite weight", i + 1)));
            }
        }
        Ok(Self(w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlTrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for IrlTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            decay: 0.9,
            decay_every: 50,
            weight_decay: 1e-2,
            batch_size: 64,
            steps: 500,
            seed: 0,
        }
    }
}

/// Features of every proposal in one scene and the index of the demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlSample {
    pub features: Vec<[f64; NUM_FEATURES]>,
    pub demo: usize,
}

impl IrlSample {
    pub fn new(features: &[FeatureVector], demo: usize) -> Self {
        Self {
            features: features.iter().map(FeatureVector::to_array).collect(),
            demo,
        }
    }
}

pub fn cost(w: &CostWeights, f: &[f64; NUM_FEATURES]) -> f64 {
    w.0.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// `exp(-c_i) / sum_j exp(-c_j)` with the minimum cost shifted to zero.
pub fn proposal_distribution(costs: &[f64]) -> Vec<f64> {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = costs.iter().map(|c| (min - c).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn check(batch: &[IrlSample]) -> Result<(), IrlError> {
    for (index, s) in batch.iter().enumerate() {
        if s.features.len() < 2 {
            return Err(IrlError::DegenerateScenario { index, proposals: s.features.len() });
        }
        if s.demo >= s.features.len() {
            return Err(IrlError::InvalidLabel { index, label: s.demo, proposals: s.features.len() });
        }
    }
    Ok(())
}

/// `-log P(demo)` of one scene, computed stably.
fn nll(w: &CostWeights, s: &IrlSample) -> f64 {
    let costs: Vec<f64> = s.features.iter().map(|f| cost(w, f)).collect();
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let log_z = -min + costs.iter().map(|c| (min - c).exp()).sum::<f64>().ln();
    costs[s.demo] + log_z
}

fn l2(w: &CostWeights) -> f64 {
    w.0.iter().map(|x| x * x).sum()
}

/// Mean demo negative log-likelihood over `batch`, without regularization.
pub fn irl_nll(w: &CostWeights, batch: &[IrlSample]) -> Result<f64, IrlError> {
    check(batch)?;
    if batch.is_empty() {
        return Err(IrlError::EmptyDataset);
    }
    Ok(batch.iter().map(|s| nll(w, s)).sum::<f64>() / batch.len() as f64)
}

/// Mean demo NLL plus `weight_decay / 2 * |w|^2`.
pub fn irl_loss(w: &CostWeights, batch: &[IrlSample], weight_decay: f64) -> Result<f64, IrlError> {
    Ok(irl_nll(w, batch)? + 0.5 * weight_decay * l2(w))
}

/// Gradient of [`irl_loss`]: demonstrated minus expected features, averaged,
/// plus `weight_decay * w`.
pub fn irl_gradient(w: &CostWeights, batch: &[IrlSample], weight_decay: f64) -> Result<[f64; NUM_FEATURES], IrlError> {
    check(batch)?;
    if batch.is_empty() {
        return Err(IrlError::EmptyDataset);
    }
    let mut g = [0.0; NUM_FEATURES];
    for s in batch {
        let costs: Vec<f64> = s.features.iter().map(|f| cost(w, f)).collect();
        let p = proposal_distribution(&costs);
        for (pj, f) in p.iter().zip(&s.features) {
            for c in 0..NUM_FEATURES {
                g[c] -= pj * f[c];
            }
        }
        for c in 0..NUM_FEATURES {
            g[c] += s.features[s.demo][c];
        }
    }
    let n = batch.len() as f64;
    for c in 0..NUM_FEATURES {
        g[c] = g[c] / n + weight_decay * w.0[c];
    }
    Ok(g)
}

/// Index of the endpoint nearest to `truth`; the lowest index wins ties.
pub fn label_demo(endpoints: &[Point2], truth: Point2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in endpoints.iter().enumerate() {
        let d = e.distance(truth);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlReport {
    /// `(step, minibatch NLL before the update, learning rate)`.
    pub history: Vec<(usize, f64, f64)>,
}

/// Adam from zero weights over shuffled minibatches.
pub fn train_irl(dataset: &[IrlSample], cfg: &IrlTrainConfig) -> Result<(CostWeights, IrlReport), IrlError> {
    if dataset.is_empty() {
        return Err(IrlError::EmptyDataset);
    }
    check(dataset)?;
    let batch_size = cfg.batch_size.clamp(1, dataset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut w = CostWeights::zeros();
    let mut adam = Adam::new(NUM_FEATURES, AdamConfig::default());
    let mut history = Vec::with_capacity(cfg.steps);
    let mut batch = Vec::with_capacity(batch_size);
    for step in 0..cfg.steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        batch.clear();
        batch.extend(order[cursor..cursor + batch_size].iter().map(|&i| dataset[i].clone()));
        cursor += batch_size;
        let loss = irl_nll(&w, &batch)?;
        let grad = irl_gradient(&w, &batch, cfg.weight_decay)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(IrlError::NonFiniteLoss { step });
        }
        let lr = step_decay(cfg.learning_rate, cfg.decay, cfg.decay_every, step);
        adam.step(&mut w.0, &grad, lr);
        history.push((step, loss, lr));
    }
    Ok((w, IrlReport { history }))
}

/// Proposal indices with their probabilities, most likely first. Ordered by
/// cost so probabilities that underflow to zero still rank; equal costs keep
/// their original order.
pub fn select_behavior(features: &[FeatureVector], w: &CostWeights) -> Vec<(usize, f64)> {
    let costs: Vec<f64> = features.iter().map(|f| cost(w, &f.to_array())).collect();
    let p = proposal_distribution(&costs);
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    order.into_iter().map(|i| (i, p[i])).collect()
}

/// Fraction of samples whose demonstration is the most likely proposal.
pub fn demo_accuracy(w: &CostWeights, dataset: &[IrlSample]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let hits = dataset
        .iter()
        .filter(|s| {
            let f: Vec<FeatureVector> = s.features.iter().map(|a| FeatureVector::from_array(*a)).collect();
            select_behavior(&f, w)[0].0 == s.demo
        })
        .count();
    hits as f64 / dataset.len() as f64
}
