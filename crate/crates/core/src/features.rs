//! The seven scalar features of a trajectory proposal.
//!
//! Four depend on the proposal alone (travel efficiency, longitudinal
//! acceleration and jerk, lateral acceleration). Three depend on the
//! predicted futures of the other agents (headway, lateral distance,
//! collisions); they use the Gaussian means as point predictions.

use serde::{Deserialize, Serialize};

use crate::frenet::ReferencePath;
use crate::generation::TrajectoryProposal;
use crate::geometry::{Point2, Pose};
use crate::prediction::{PredictedFutures, SceneContext};
use crate::scenario::AgentKind;
use crate::DT;

pub const NUM_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] =
    ["travel", "acc", "jerk", "lat_acc", "headway", "lateral_dist", "safety"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub a_lon_max: f64,
    pub j_max: f64,
    pub a_lat_max: f64,
    pub lane_half_width: f64,
    pub v_floor: f64,
    pub circles_per_vehicle: usize,
    /// Time headway (s) used for a future in which no leader appears while
    /// another future has one.
    pub no_leader_headway: f64,
    /// Lateral gap (m) used for a future without side vehicles while another
    /// future has one.
    pub no_side_distance: f64,
    /// Weight futures by `p_k` alone instead of `p_k / K`.
    pub drop_mode_count_factor: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            a_lon_max: 5.0,
            j_max: 10.0,
            a_lat_max: 5.0,
            lane_half_width: 1.75,
            v_floor: 0.1,
            circles_per_vehicle: 3,
            no_leader_headway: 10.0,
            no_side_distance: 10.0,
            drop_mode_count_factor: false,
        }
    }
}

impl FeatureConfig {
    fn mode_weight(&self, futures: &PredictedFutures, k: usize) -> f64 {
        if self.drop_mode_count_factor {
            futures.mode_probs[k]
        } else {
            futures.mode_probs[k] / futures.num_modes() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub travel: f64,
    pub acc: f64,
    pub jerk: f64,
    pub lat_acc: f64,
    pub headway: f64,
    pub lateral_dist: f64,
    pub safety: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [self.travel, self.acc, self.jerk, self.lat_acc, self.headway, self.lateral_dist, self.safety]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        let [travel, acc, jerk, lat_acc, headway, lateral_dist, safety] = a;
        Self { travel, acc, jerk, lat_acc, headway, lateral_dist, safety }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Derivative of uniformly sampled values: central differences inside,
/// one-sided at the ends.
fn derivative(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| match i {
            0 => (values[1] - values[0]) / dt,
            i if i == n - 1 => (values[n - 1] - values[n - 2]) / dt,
            i => (values[i + 1] - values[i - 1]) / (2.0 * dt),
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `(travel, acc, jerk, lat_acc)` of a proposal on its reference path.
pub fn trajectory_features(proposal: &TrajectoryProposal, path: &ReferencePath, cfg: &FeatureConfig) -> [f64; 4] {
    let v_limit = path.speed_limit();
    let speeds: Vec<f64> = proposal.states.iter().map(|p| p.speed).collect();
    let travel = speeds.iter().map(|v| (v - v_limit).abs() / v_limit).sum::<f64>() / speeds.len() as f64;
    let acc = derivative(&speeds, DT);
    let jerk = derivative(&acc, DT);
    let lat = proposal
        .states
        .iter()
        .zip(&proposal.frenet_states)
        .map(|(p, f)| p.speed * p.speed * path.point_at(f.s).curvature + f.d_ddot)
        .collect::<Vec<_>>();
    [
        travel,
        max_abs(&acc) / cfg.a_lon_max,
        max_abs(&jerk) / cfg.j_max,
        max_abs(&lat) / cfg.a_lat_max,
    ]
}

/// Oriented box for collision checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl BoxPose {
    pub fn new(pose: &Pose, length: f64, width: f64) -> Self {
        Self { x: pose.x, y: pose.y, heading: pose.heading, length, width }
    }

    fn circles(&self, n: usize) -> impl Iterator<Item = Point2> + '_ {
        let (s, c) = self.heading.sin_cos();
        let step = self.length / n as f64;
        (0..n).map(move |j| {
            let off = (j as f64 - (n as f64 - 1.0) / 2.0) * step;
            Point2::new(self.x + off * c, self.y + off * s)
        })
    }

    fn circle_radius(&self, n: usize) -> f64 {
        (self.length / (2.0 * n as f64)).hypot(self.width / 2.0)
    }
}

/// 1 when any circle of `a` overlaps any circle of `b`, else 0. Each box is
/// covered by `circles` circles evenly spaced along its length.
pub fn collision_indicator(a: &BoxPose, b: &BoxPose, circles: usize) -> f64 {
    let n = circles.max(1);
    let reach = a.circle_radius(n) + b.circle_radius(n);
    let far = 0.5 * (a.length + b.length) + reach;
    if Point2::new(a.x - b.x, a.y - b.y).norm() >= far {
        return 0.0;
    }
    for pa in a.circles(n) {
        for pb in b.circles(n) {
            if pa.distance(pb) < reach {
                return 1.0;
            }
        }
    }
    0.0
}

/// Size, kind and current pose of a predicted agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentMeta {
    pub length: f64,
    pub width: f64,
    pub kind: AgentKind,
    pub current: Pose,
}

impl AgentMeta {
    pub fn from_context(ctx: &SceneContext) -> Vec<Self> {
        ctx.agents
            .iter()
            .map(|a| Self { length: a.length, width: a.width, kind: a.kind, current: a.current().pose() })
            .collect()
    }
}

/// Headings along a predicted track from consecutive displacements, holding
/// the previous heading while the agent barely moves.
fn track_headings(current: &Pose, track: &[Point2]) -> Vec<f64> {
    let mut heading = current.heading;
    let mut prev = current.position();
    track
        .iter()
        .map(|p| {
            let delta = *p - prev;
            if delta.norm() > 1e-3 {
                heading = delta.y.atan2(delta.x);
            }
            prev = *p;
            heading
        })
        .collect()
}

/// `(s, d)` of each point on `path`, searching near the previous projection.
fn project_track(path: &ReferencePath, track: &[Point2]) -> Vec<Option<(f64, f64)>> {
    let mut hint: Option<f64> = None;
    track
        .iter()
        .map(|p| {
            let pose = Pose { x: p.x, y: p.y, heading: 0.0, speed: 0.0 };
            let windowed = hint.and_then(|s| path.cartesian_to_frenet_in_range(&pose, 0.0, s - 15.0, s + 15.0).ok());
            let st = windowed.or_else(|| path.cartesian_to_frenet(&pose, 0.0).ok());
            hint = st.map(|st| st.s);
            st.map(|st| (st.s, st.d))
        })
        .collect()
}

/// `(headway, lateral_dist, safety)` of a proposal against predicted futures.
pub fn interaction_features(
    proposal: &TrajectoryProposal,
    av_length: f64,
    av_width: f64,
    futures: &PredictedFutures,
    agents: &[AgentMeta],
    path: &ReferencePath,
    cfg: &FeatureConfig,
) -> [f64; 3] {
    if agents.is_empty() || futures.num_agents() == 0 {
        return [0.0; 3];
    }
    let steps = proposal.states.len();
    let mut hw_sum = 0.0;
    let mut ld_sum = 0.0;
    let mut any_leader = false;
    let mut any_side = false;
    let mut safety = 0.0;

    for k in 0..futures.num_modes() {
        let weight = cfg.mode_weight(futures, k);
        let mut min_hw: Option<f64> = None;
        let mut min_ld: Option<f64> = None;
        let mut collided = vec![false; steps];
        for (i, meta) in agents.iter().enumerate() {
            let track: Vec<Point2> = futures.modes[k][i].iter().map(|g| g.mean()).collect();
            let headings = track_headings(&meta.current, &track);
            for t in 0..steps {
                if collided[t] {
                    continue;
                }
                let av = BoxPose::new(&proposal.states[t], av_length, av_width);
                let other = BoxPose { x: track[t].x, y: track[t].y, heading: headings[t], length: meta.length, width: meta.width };
                if collision_indicator(&av, &other, cfg.circles_per_vehicle) > 0.0 {
                    collided[t] = true;
                }
            }
            if meta.kind != AgentKind::Vehicle {
                continue;
            }
            for (t, sd) in project_track(path, &track).into_iter().enumerate() {
                let Some((s, d)) = sd else {
                    continue;
                };
                let own = &proposal.frenet_states[t];
                let ds = s - own.s;
                let dd = d - own.d;
                if ds > 0.0 && dd.abs() < cfg.lane_half_width {
                    let gap = (ds - 0.5 * (av_length + meta.length)).max(0.1);
                    let hw = gap / proposal.states[t].speed.max(cfg.v_floor);
                    min_hw = Some(min_hw.map_or(hw, |m: f64| m.min(hw)));
                }
                if ds.abs() < 0.5 * (av_length + meta.length) && dd.abs() >= cfg.lane_half_width {
                    let gap = (dd.abs() - 0.5 * (av_width + meta.width)).max(0.0);
                    min_ld = Some(min_ld.map_or(gap, |m: f64| m.min(gap)));
                }
            }
        }
        any_leader |= min_hw.is_some();
        any_side |= min_ld.is_some();
        hw_sum += weight * min_hw.unwrap_or(cfg.no_leader_headway);
        ld_sum += weight * min_ld.unwrap_or(cfg.no_side_distance);
        safety += weight * collided.iter().filter(|c| **c).count() as f64;
    }
    let headway = if any_leader { (-hw_sum * hw_sum).exp() } else { 0.0 };
    let lateral = if any_side { (-ld_sum * ld_sum).exp() } else { 0.0 };
    [headway, lateral, safety]
}

/// All seven features.
pub fn compute_features(
    proposal: &TrajectoryProposal,
    path: &ReferencePath,
    ctx: &SceneContext,
    futures: &PredictedFutures,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let [travel, acc, jerk, lat_acc] = trajectory_features(proposal, path, cfg);
    let agents = AgentMeta::from_context(ctx);
    let [headway, lateral_dist, safety] =
        interaction_features(proposal, ctx.av.length, ctx.av.width, futures, &agents, path, cfg);
    FeatureVector { travel, acc, jerk, lat_acc, headway, lateral_dist, safety }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::FrenetState;
    use crate::generation::{build_proposal, solve_quartic, Maneuver, Target};
    use crate::prediction::Gaussian2;
    use crate::T_F;

    fn straight(limit: f64) -> ReferencePath {
        ReferencePath::build(&[Point2::new(0.0, 0.0), Point2::new(400.0, 0.0)], limit).unwrap()
    }

    fn constant(path: &ReferencePath, v: f64) -> TrajectoryProposal {
        let init = FrenetState { s: 10.0, s_dot: v, ..Default::default() };
        let t = Target { speed: v, lateral_offset: 0.0, maneuver: Maneuver::Keep };
        build_proposal(path, &init, &t).unwrap().unwrap()
    }

    #[test]
    fn limit_tracking_is_free() {
        let path = straight(15.0);
        let f = trajectory_features(&constant(&path, 15.0), &path, &FeatureConfig::default());
        assert!(f.iter().all(|v| v.abs() < 1e-9), "{f:?}");
        let half = trajectory_features(&constant(&path, 7.5), &path, &FeatureConfig::default());
        assert!((half[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn braking_acc_matches_polynomial() {
        let path = straight(15.0);
        let init = FrenetState { s: 0.0, s_dot: 10.0, ..Default::default() };
        let t = Target { speed: 0.0, lateral_offset: 0.0, maneuver: Maneuver::Keep };
        let p = build_proposal(&path, &init, &t).unwrap().unwrap();
        let poly = solve_quartic([0.0, 10.0, 0.0], [0.0, 0.0], 5.0).unwrap();
        let dense = (0..=5000).map(|i| poly.acceleration(i as f64 * 1e-3).abs()).fold(0.0, f64::max);
        let f = trajectory_features(&p, &path, &FeatureConfig::default());
        // central differences of a cubic speed profile carry an O(dt^2) error
        assert!((f[1] - dense / 5.0).abs() < 1e-3, "{} vs {}", f[1], dense / 5.0);
    }

    #[test]
    fn lateral_acceleration_on_arc() {
        let r: f64 = 100.0;
        let pts: Vec<Point2> = (0..=400)
            .map(|i| {
                let a = i as f64 * 0.0075;
                Point2::new(r * a.sin(), r - r * a.cos())
            })
            .collect();
        let path = ReferencePath::build(&pts, 10.0).unwrap();
        let p = constant(&path, 10.0);
        let f = trajectory_features(&p, &path, &FeatureConfig::default());
        assert!((f[3] - 100.0 / r / 5.0).abs() < 0.01, "{}", f[3]);
    }

    #[test]
    fn identical_and_far_boxes() {
        let a = BoxPose { x: 0.0, y: 0.0, heading: 0.3, length: 5.0, width: 2.0 };
        assert_eq!(collision_indicator(&a, &a, 3), 1.0);
        let b = BoxPose { x: 100.0, ..a };
        assert_eq!(collision_indicator(&a, &b, 3), 0.0);
    }

    fn futures_for(track: Vec<Point2>, k: usize) -> PredictedFutures {
        PredictedFutures::from_tracks(&[track], k)
    }

    fn meta(x: f64, y: f64) -> AgentMeta {
        AgentMeta { length: 5.0, width: 2.0, kind: AgentKind::Vehicle, current: Pose { x, y, heading: 0.0, speed: 10.0 } }
    }

    #[test]
    fn no_agents_no_interaction() {
        let path = straight(15.0);
        let p = constant(&path, 10.0);
        let f = interaction_features(&p, 5.0, 2.0, &PredictedFutures::empty(3), &[], &path, &FeatureConfig::default());
        assert_eq!(f, [0.0; 3]);
    }

    #[test]
    fn bumper_contact_leader_headway() {
        let path = straight(15.0);
        let p = constant(&path, 10.0);
        // leader center exactly one car length ahead at every step
        let track: Vec<Point2> = p.states.iter().map(|s| Point2::new(s.x + 5.0, 0.0)).collect();
        let f = interaction_features(&p, 5.0, 2.0, &futures_for(track, 3), &[meta(15.0, 0.0)], &path, &FeatureConfig::default());
        let hw: f64 = 3.0 * (1.0 / 3.0) * 0.01 / 3.0;
        assert!((f[0] - (-hw * hw).exp()).abs() < 1e-12);
        assert!((f[2] - 50.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dropping_mode_count_factor() {
        let path = straight(15.0);
        let p = constant(&path, 10.0);
        let track: Vec<Point2> = p.states.iter().map(|s| Point2::new(s.x, 0.0)).collect();
        let cfg = FeatureConfig { drop_mode_count_factor: true, ..Default::default() };
        let f = interaction_features(&p, 5.0, 2.0, &futures_for(track, 3), &[meta(10.0, 0.0)], &path, &cfg);
        assert!((f[2] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn side_vehicle_distance() {
        let path = straight(15.0);
        let p = constant(&path, 10.0);
        let track: Vec<Point2> = p.states.iter().map(|s| Point2::new(s.x, 3.5)).collect();
        let cfg = FeatureConfig { drop_mode_count_factor: true, ..Default::default() };
        let f = interaction_features(&p, 5.0, 2.0, &futures_for(track, 1), &[meta(10.0, 3.5)], &path, &cfg);
        assert!((f[1] - (-1.5f64 * 1.5).exp()).abs() < 1e-9);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn zero_probability_mode_contributes_nothing() {
        let path = straight(15.0);
        let p = constant(&path, 10.0);
        let hit: Vec<Point2> = p.states.iter().map(|s| Point2::new(s.x, 0.0)).collect();
        let mut fut = futures_for(hit, 2);
        fut.mode_probs = vec![1.0, 0.0];
        fut.modes[1][0].iter_mut().for_each(|g: &mut Gaussian2| g.mu_y = 50.0);
        let f = interaction_features(&p, 5.0, 2.0, &fut, &[meta(10.0, 0.0)], &path, &FeatureConfig::default());
        assert!((f[2] - 25.0).abs() < 1e-9);
        assert_eq!(T_F, p.states.len());
    }
}
