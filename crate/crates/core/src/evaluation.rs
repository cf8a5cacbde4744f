//! Prediction and planning metrics.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::frenet::ReferencePath;
use crate::generation::TrajectoryProposal;
use crate::geometry::{Point2, Pose};
use crate::pipeline::{PlanError, Planner};
use crate::prediction::{PredictedFutures, PredictionError, SceneContext};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// A top-3 proposal matches when its endpoint is this close to the truth (m).
    pub match_radius: f64,
    /// Speed changes within this band count as keeping speed (m/s).
    pub speed_deadband: f64,
    /// Terminal lateral offsets beyond this count as a lane change (m).
    pub lane_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { match_radius: 3.0, speed_deadband: 0.5, lane_threshold: 1.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedIntent {
    Accelerate,
    Keep,
    Decelerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneIntent {
    Keep,
    Left,
    Right,
}

pub fn speed_intent(initial: f64, terminal: f64, th: &Thresholds) -> SpeedIntent {
    let dv = terminal - initial;
    if dv > th.speed_deadband {
        SpeedIntent::Accelerate
    } else if dv < -th.speed_deadband {
        SpeedIntent::Decelerate
    } else {
        SpeedIntent::Keep
    }
}

pub fn lane_intent(terminal_offset: f64, th: &Thresholds) -> LaneIntent {
    if terminal_offset > th.lane_threshold {
        LaneIntent::Left
    } else if terminal_offset < -th.lane_threshold {
        LaneIntent::Right
    } else {
        LaneIntent::Keep
    }
}

/// `(min_ade, min_fde)` of the Gaussian means over modes; errors are
/// averaged over agents (and steps for ADE) within a mode.
pub fn prediction_metrics(pred: &PredictedFutures, truth: &[Vec<Point2>]) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for mode in &pred.modes {
        let mut ade = 0.0;
        let mut fde = 0.0;
        let mut count = 0usize;
        for (track, t) in mode.iter().zip(truth) {
            for (g, y) in track.iter().zip(t) {
                ade += g.mean().distance(*y);
                count += 1;
            }
            fde += track.last().unwrap().mean().distance(*t.last().unwrap());
        }
        let n = truth.len().max(1) as f64;
        best.0 = best.0.min(ade / count.max(1) as f64);
        best.1 = best.1.min(fde / n);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningHit {
    pub plan_min_fde: f64,
    pub top3_hit: bool,
    pub speed_hit: bool,
    pub lane_hit: bool,
}

/// Metrics of a ranked proposal list against the AV's logged future.
pub fn planning_metrics(
    ranked: &[&TrajectoryProposal],
    truth: &[Pose],
    initial_speed: f64,
    path: &ReferencePath,
    th: &Thresholds,
) -> PlanningHit {
    let end = truth.last().unwrap();
    let plan_min_fde = ranked
        .iter()
        .take(3)
        .map(|p| p.endpoint().position().distance(end.position()))
        .fold(f64::INFINITY, f64::min);
    let top = ranked[0];
    let truth_offset = path.project(end.position()).map_or(0.0, |(_, d)| d);
    let top_offset = top.frenet_states.last().unwrap().d;
    PlanningHit {
        plan_min_fde,
        top3_hit: plan_min_fde <= th.match_radius,
        speed_hit: speed_intent(initial_speed, top.endpoint().speed, th) == speed_intent(initial_speed, end.speed, th),
        lane_hit: lane_intent(top_offset, th) == lane_intent(truth_offset, th),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub scenario_id: usize,
    pub hit: PlanningHit,
    /// `None` when the scene has no other agents.
    pub min_ade: Option<f64>,
    pub min_fde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub min_ade: f64,
    pub min_fde: f64,
    pub plan_min_fde: f64,
    pub top3_accuracy: f64,
    pub speed_intent_accuracy: f64,
    pub lane_intent_accuracy: f64,
    pub scenario_count: usize,
}

impl EvalReport {
    pub fn from_rows(rows: &[EvalRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let frac = |f: fn(&EvalRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
        let mean_opt = |f: fn(&EvalRow) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(f).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Self {
            min_ade: mean_opt(|r| r.min_ade),
            min_fde: mean_opt(|r| r.min_fde),
            plan_min_fde: rows.iter().map(|r| r.hit.plan_min_fde).sum::<f64>() / n,
            top3_accuracy: frac(|r| r.hit.top3_hit),
            speed_intent_accuracy: frac(|r| r.hit.speed_hit),
            lane_intent_accuracy: frac(|r| r.hit.lane_hit),
            scenario_count: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub rows: Vec<EvalRow>,
    /// Indices of scenarios for which no proposal could be generated.
    pub skipped: Vec<usize>,
}

/// Plans every scenario and scores the ranking against the logged AV
/// future. Prediction metrics condition on the logged AV future. Scenes
/// without an ego lane or a valid proposal are skipped; prediction failures
/// abort.
pub fn evaluate_planner(dataset: &[Scenario], planner: &Planner, th: &Thresholds) -> Result<Evaluation, PlanError> {
    let mut rows = Vec::with_capacity(dataset.len());
    let mut skipped = Vec::new();
    for (id, scenario) in dataset.iter().enumerate() {
        match evaluate_scenario(id, scenario, planner, th) {
            Ok(row) => rows.push(row),
            Err(PlanError::Generation(_)) => skipped.push(id),
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(PlanError::EmptyDataset);
    }
    Ok(Evaluation { report: EvalReport::from_rows(&rows), rows, skipped })
}

pub fn evaluate_scenario(id: usize, scenario: &Scenario, planner: &Planner, th: &Thresholds) -> Result<EvalRow, PlanError> {
    let (eval, ranking) = planner.plan(scenario)?;
    let ranked: Vec<&TrajectoryProposal> = ranking.iter().map(|(i, _)| &eval.proposals[*i]).collect();
    let hit = planning_metrics(&ranked, &scenario.av_future(), scenario.av_current().speed, &eval.ego.path, th);
    let (min_ade, min_fde) = match conditioned_prediction(scenario, &eval.ctx, planner)? {
        Some((a, f)) => (Some(a), Some(f)),
        None => (None, None),
    };
    Ok(EvalRow { scenario_id: id, hit, min_ade, min_fde })
}

fn conditioned_prediction(
    scenario: &Scenario,
    ctx: &SceneContext,
    planner: &Planner,
) -> Result<Option<(f64, f64)>, PredictionError> {
    if ctx.agents.is_empty() {
        return Ok(None);
    }
    let plan = vec![scenario.av_future()];
    let pred = planner.source.predict_plans(scenario, ctx, &plan, true)?.remove(0);
    Ok(Some(prediction_metrics(&pred, &ctx.truth_futures(scenario))))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Per-scenario rows followed by a `summary` row. Threshold values are part
/// of the column names.
pub fn write_csv<W: Write>(mut w: W, rows: &[EvalRow], report: &EvalReport, th: &Thresholds) -> io::Result<()> {
    writeln!(
        w,
        "scenario_id,plan_min_fde,top3_hit_r{},speed_hit_db{},lane_hit_th{},min_ade,min_fde",
        th.match_radius, th.speed_deadband, th.lane_threshold
    )?;
    let b = |x: bool| if x { 1 } else { 0 };
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{},{},{},{},{}",
            r.scenario_id,
            r.hit.plan_min_fde,
            b(r.hit.top3_hit),
            b(r.hit.speed_hit),
            b(r.hit.lane_hit),
            opt(r.min_ade),
            opt(r.min_fde)
        )?;
    }
    writeln!(
        w,
        "summary,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        report.plan_min_fde,
        report.top3_accuracy,
        report.speed_intent_accuracy,
        report.lane_intent_accuracy,
        report.min_ade,
        report.min_fde
    )?;
    w.flush()
}
