//! Seeded synthetic scenarios.
//!
//! Every template builds a small map, places vehicles on it and runs the IDM
//! traffic simulator for the full window, so histories and ground-truth
//! futures (the AV's included) are kinematically consistent. Randomized
//! quantities and their ranges:
//!
//! | quantity | range |
//! |---|---|
//! | speed limit | 10 to 16 m/s |
//! | AV start arc length | 40 to 70 m |
//! | initial speeds | 40% to 100% of the limit |
//! | desired speeds | 60% to 100% of the limit (leaders may be slower) |
//! | gaps between vehicles | template specific, 12 to 45 m |
//! | lane changes | start 1.5 to 3.5 s, duration 3 to 4.5 s |
//! | curve radius | 80 to 300 m |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentKind, AgentTrack, Lane, MapModel, Scenario};
use crate::frenet::ReferencePath;
use crate::generation::solve_quintic;
use crate::geometry::Pose;
use crate::prediction::idm::{simulate, Actor, DrivenVehicle, IdmParams, Lateral, YieldRule};
use crate::{DT, TRACK_LEN};

pub const LANE_WIDTH: f64 = 3.5;
const ROAD_LENGTH: f64 = 400.0;
const CAR_LENGTH: f64 = 4.8;
const CAR_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    CarFollow,
    CutIn,
    LaneChange,
    IntersectionYield,
    CurvedRoad,
    /// Cycles through the other five templates.
    Mixed,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::CarFollow,
        Template::CutIn,
        Template::LaneChange,
        Template::IntersectionYield,
        Template::CurvedRoad,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Template::CarFollow => "car_follow",
            Template::CutIn => "cut_in",
            Template::LaneChange => "lane_change",
            Template::IntersectionYield => "intersection_yield",
            Template::CurvedRoad => "curved_road",
            Template::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .iter()
            .chain(std::iter::once(&Template::Mixed))
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

/// Seed of the `index`-th scenario of a run.
pub fn scenario_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ 0x94D0_49BB_1331_11EB
}

/// `count` scenarios of `template`, deterministic in `seed`.
pub fn synthesize_scenarios(template: Template, count: usize, seed: u64) -> Vec<Scenario> {
    (0..count)
        .map(|i| {
            let t = match template {
                Template::Mixed => Template::ALL[i % Template::ALL.len()],
                t => t,
            };
            synthesize_one(t, scenario_seed(seed, i))
        })
        .collect()
}

pub fn synthesize_one(template: Template, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match template {
        Template::CarFollow => car_follow(&mut rng),
        Template::CutIn => cut_in(&mut rng),
        Template::LaneChange => lane_change(&mut rng),
        Template::IntersectionYield => intersection_yield(&mut rng),
        Template::CurvedRoad => curved_road(&mut rng),
        Template::Mixed => car_follow(&mut rng),
    }
}

struct Builder {
    lanes: Vec<Lane>,
    paths: Vec<ReferencePath>,
    actors: Vec<Actor>,
    kinds: Vec<(AgentKind, f64, f64)>,
    crosswalks: Vec<Vec<[f64; 2]>>,
}

impl Builder {
    fn new() -> Self {
        Self { lanes: Vec::new(), paths: Vec::new(), actors: Vec::new(), kinds: Vec::new(), crosswalks: Vec::new() }
    }

    /// Parallel lanes offset to the left of `center`, rightmost first, with
    /// adjacency filled in. Returns the index of the first added lane.
    fn parallel_lanes(&mut self, center: &[[f64; 2]], count: usize, limit: f64) -> usize {
        let first = self.lanes.len();
        let base = ReferencePath::build(&center.iter().map(|p| crate::Point2::new(p[0], p[1])).collect::<Vec<_>>(), limit)
            .expect("template centerline");
        for j in 0..count {
            let d = j as f64 * LANE_WIDTH;
            let points: Vec<[f64; 2]> = base
                .waypoints()
                .iter()
                .zip(base.headings())
                .map(|(p, h)| [p.x - d * h.sin(), p.y + d * h.cos()])
                .collect();
            let id = first + j;
            self.lanes.push(Lane {
                id,
                points,
                speed_limit: limit,
                left: (j + 1 < count).then_some(id + 1),
                right: (j > 0).then(|| id - 1),
            });
        }
        for lane in &self.lanes[first..] {
            self.paths.push(lane.reference_path().expect("template lane"));
        }
        first
    }

    fn single_lane(&mut self, points: Vec<[f64; 2]>, limit: f64) -> usize {
        let id = self.lanes.len();
        self.lanes.push(Lane { id, points, speed_limit: limit, left: None, right: None });
        self.paths.push(self.lanes[id].reference_path().expect("template lane"));
        id
    }

    fn vehicle(&mut self, path: usize, s: f64, v: f64, desired: f64, lateral: Lateral) -> usize {
        self.actors.push(Actor::Driven(DrivenVehicle {
            path,
            s,
            v,
            lateral,
            desired_speed: desired,
            length: CAR_LENGTH,
            width: CAR_WIDTH,
            yield_rule: None,
        }));
        self.kinds.push((AgentKind::Vehicle, CAR_LENGTH, CAR_WIDTH));
        self.actors.len() - 1
    }

    fn scripted(&mut self, kind: AgentKind, length: f64, width: f64, poses: Vec<Pose>) {
        self.actors.push(Actor::Scripted { poses, length });
        self.kinds.push((kind, length, width));
    }

    fn finish(self) -> Scenario {
        let tracks = simulate(&self.paths, &self.actors, &IdmParams::default(), TRACK_LEN - 1, DT);
        let agents = tracks
            .into_iter()
            .zip(&self.kinds)
            .enumerate()
            .map(|(i, (poses, &(kind, length, width)))| {
                let mut t = AgentTrack::empty(i as u64, kind, length, width);
                poses.into_iter().for_each(|p| t.push(p));
                t
            })
            .collect();
        Scenario {
            map: MapModel { lanes: self.lanes, crosswalks: self.crosswalks },
            agents,
            av_index: 0,
            timestep_s: DT,
        }
    }
}

fn straight(y: f64) -> Vec<[f64; 2]> {
    vec![[0.0, y], [ROAD_LENGTH, y]]
}

fn limit(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(10.0..16.0)
}

fn frac(rng: &mut ChaCha8Rng, lo: f64, hi: f64, of: f64) -> f64 {
    rng.gen_range(lo..hi) * of
}

/// Quintic shift of `delta` starting at `start` and lasting `duration`.
fn shift(from: f64, to: f64, start: f64, duration: f64) -> Lateral {
    Lateral::Shift {
        start,
        duration,
        coeffs: solve_quintic([from, 0.0, 0.0], [to, 0.0, 0.0], duration).expect("positive duration"),
    }
}

/// AV and a leader ahead in the same lane of a two-lane road.
fn car_follow(rng: &mut ChaCha8Rng) -> Scenario {
    let v_lim = limit(rng);
    let mut b = Builder::new();
    let lane = b.parallel_lanes(&straight(0.0), 2, v_lim);
    let s_av = rng.gen_range(40.0..70.0);
    let v_av = frac(rng, 0.5, 1.0, v_lim);
    let desired = frac(rng, 0.7, 1.0, v_lim);
    b.vehicle(lane, s_av, v_av, desired, Lateral::Hold(0.0));
    let v_lead = frac(rng, 0.3, 0.9, v_lim);
    let gap = rng.gen_range(15.0..45.0);
    b.vehicle(lane, s_av + gap, v_lead, v_lead * rng.gen_range(0.8..1.1), Lateral::Hold(0.0));
    b.finish()
}

/// A vehicle in the left lane cuts in front of the AV while another vehicle
/// follows the AV.
fn cut_in(rng: &mut ChaCha8Rng) -> Scenario {
    let v_lim = limit(rng);
    let mut b = Builder::new();
    let lane = b.parallel_lanes(&straight(0.0), 2, v_lim);
    let s_av = rng.gen_range(50.0..70.0);
    let v_av = frac(rng, 0.6, 0.9, v_lim);
    b.vehicle(lane, s_av, v_av, frac(rng, 0.8, 1.0, v_lim), Lateral::Hold(0.0));
    let behind = rng.gen_range(12.0..30.0);
    b.vehicle(lane, s_av - behind, v_av * rng.gen_range(0.9..1.1), frac(rng, 0.9, 1.0, v_lim), Lateral::Hold(0.0));
    let ahead = rng.gen_range(3.0..15.0);
    let v_cut = v_av * rng.gen_range(0.7..1.0);
    let start = rng.gen_range(1.5..3.5);
    let duration = rng.gen_range(3.0..4.5);
    b.vehicle(lane + 1, s_av + ahead, v_cut, v_cut, shift(0.0, -LANE_WIDTH, start, duration));
    if rng.gen_bool(0.5) {
        let far = rng.gen_range(35.0..60.0);
        let v = frac(rng, 0.6, 0.9, v_lim);
        b.vehicle(lane, s_av + far, v, v, Lateral::Hold(0.0));
    }
    b.finish()
}

/// The AV overtakes a slow leader by changing to the left lane.
fn lane_change(rng: &mut ChaCha8Rng) -> Scenario {
    let v_lim = limit(rng);
    let mut b = Builder::new();
    let lanes = rng.gen_range(2..=3);
    let first = b.parallel_lanes(&straight(0.0), lanes, v_lim);
    let own = first + rng.gen_range(0..lanes - 1);
    let s_av = rng.gen_range(40.0..70.0);
    let v_av = frac(rng, 0.6, 0.95, v_lim);
    let start = rng.gen_range(1.5..3.5);
    let duration = rng.gen_range(3.0..4.5);
    b.vehicle(own, s_av, v_av, frac(rng, 0.85, 1.0, v_lim), shift(0.0, LANE_WIDTH, start, duration));
    let v_slow = frac(rng, 0.3, 0.6, v_lim);
    b.vehicle(own, s_av + rng.gen_range(20.0..40.0), v_slow, v_slow, Lateral::Hold(0.0));
    if rng.gen_bool(0.6) {
        let v = frac(rng, 0.8, 1.0, v_lim);
        b.vehicle(own + 1, s_av + rng.gen_range(30.0..50.0), v, v, Lateral::Hold(0.0));
    }
    if lanes == 3 && rng.gen_bool(0.5) {
        let v = frac(rng, 0.5, 0.9, v_lim);
        let other = if own == first { first + 2 } else { first };
        b.vehicle(other, s_av + rng.gen_range(-20.0..20.0), v, v, Lateral::Hold(0.0));
    }
    b.finish()
}

/// The AV must let a crossing vehicle pass before entering an intersection.
fn intersection_yield(rng: &mut ChaCha8Rng) -> Scenario {
    let v_lim = limit(rng);
    let mut b = Builder::new();
    let cross_x = 150.0;
    let main = b.single_lane(straight(0.0), v_lim);
    let crossing = b.single_lane(vec![[cross_x, -150.0], [cross_x, 150.0]], v_lim);
    let s_av = rng.gen_range(60.0..100.0);
    let v_av = frac(rng, 0.5, 0.9, v_lim);
    let av = b.vehicle(main, s_av, v_av, frac(rng, 0.7, 1.0, v_lim), Lateral::Hold(0.0));
    let v_cross = frac(rng, 0.6, 1.0, v_lim);
    let arrival = rng.gen_range(3.0..6.0);
    let s_cross = (150.0 - v_cross * arrival).max(5.0);
    let other = b.vehicle(crossing, s_cross, v_cross, v_cross, Lateral::Hold(0.0));
    if let Actor::Driven(v) = &mut b.actors[av] {
        v.yield_rule = Some(YieldRule { stop_s: cross_x - 6.0, other, other_clear_s: 150.0 + 6.0 });
    }
    if rng.gen_bool(0.5) {
        let v = frac(rng, 0.5, 0.9, v_lim);
        b.vehicle(main, s_av - rng.gen_range(15.0..30.0), v, v, Lateral::Hold(0.0));
    }
    let cw_x = cross_x + 10.0;
    b.crosswalks.push(vec![[cw_x - 2.0, -8.0], [cw_x + 2.0, -8.0], [cw_x + 2.0, 8.0], [cw_x - 2.0, 8.0]]);
    let walk_speed = rng.gen_range(0.8..1.6);
    let y0 = rng.gen_range(-20.0..-12.0);
    let poses = (0..TRACK_LEN)
        .map(|k| Pose { x: cw_x, y: y0 - walk_speed * DT * k as f64, heading: -std::f64::consts::FRAC_PI_2, speed: walk_speed })
        .collect();
    b.scripted(AgentKind::Pedestrian, 0.6, 0.6, poses);
    b.finish()
}

/// Two-lane road along a circular arc with a few vehicles.
fn curved_road(rng: &mut ChaCha8Rng) -> Scenario {
    let v_lim = limit(rng);
    let radius: f64 = rng.gen_range(80.0..300.0);
    let left_turn = rng.gen_bool(0.5);
    let sweep = (ROAD_LENGTH / radius).min(1.5 * std::f64::consts::PI);
    let n = (ROAD_LENGTH / 2.0) as usize;
    let center: Vec<[f64; 2]> = (0..=n)
        .map(|i| {
            let a = sweep * i as f64 / n as f64;
            let y = radius - radius * a.cos();
            [radius * a.sin(), if left_turn { y } else { -y }]
        })
        .collect();
    let mut b = Builder::new();
    let first = b.parallel_lanes(&center, 2, v_lim);
    let own = first + rng.gen_range(0..2);
    let s_av = rng.gen_range(40.0..70.0);
    let v_av = frac(rng, 0.5, 0.95, v_lim);
    b.vehicle(own, s_av, v_av, frac(rng, 0.7, 1.0, v_lim), Lateral::Hold(0.0));
    let others = rng.gen_range(1..=3);
    for _ in 0..others {
        let lane = first + rng.gen_range(0..2);
        let mut s = s_av + rng.gen_range(-30.0..60.0);
        if lane == own && (s - s_av).abs() < 12.0 {
            s = s_av + 15.0;
        }
        let v = frac(rng, 0.4, 0.9, v_lim);
        b.vehicle(lane, s.max(5.0), v, v, Lateral::Hold(0.0));
    }
    b.finish()
}
