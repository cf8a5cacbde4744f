//! Intelligent driver model and a small lane-following traffic simulator.
//!
//! The simulator drives [`Actor::Driven`] vehicles along reference paths with
//! IDM longitudinal control against the nearest vehicle ahead in their
//! corridor. [`Actor::Scripted`] vehicles replay fixed poses and take part in
//! leader selection only. The same simulator produces synthetic ground truth
//! and the plan-reactive predictions (with the AV plan as a scripted actor).

use serde::{Deserialize, Serialize};

use super::{ctrv, SceneContext};
use crate::frenet::{FrenetState, ReferencePath};
use crate::generation::LateralCoeffs;
use crate::geometry::{wrap_angle, Point2, Pose};
use crate::scenario::AgentKind;
use crate::{DT, T_F};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Jam distance s0 (m).
    pub min_gap: f64,
    /// Desired time headway T (s).
    pub time_headway: f64,
    /// Maximum acceleration a (m/s^2).
    pub max_accel: f64,
    /// Comfortable deceleration b (m/s^2).
    pub comfort_decel: f64,
    pub exponent: f64,
    /// Hard bound on commanded deceleration (m/s^2).
    pub max_decel: f64,
    /// Leaders further ahead than this are ignored (m).
    pub lookahead: f64,
    /// A vehicle is in the corridor when its lateral offset differs by less
    /// than this (m).
    pub corridor_half_width: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            min_gap: 2.0,
            time_headway: 1.5,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
            max_decel: 9.0,
            lookahead: 100.0,
            corridor_half_width: 1.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Bumper-to-bumper distance (m).
    pub gap: f64,
    pub speed: f64,
}

const MIN_GAP_FLOOR: f64 = 0.1;

/// IDM acceleration for speed `v`, desired speed `v_des` and optional leader.
pub fn idm_acceleration(p: &IdmParams, v: f64, v_des: f64, leader: Option<Leader>) -> f64 {
    let v_des = v_des.max(0.1);
    let free = 1.0 - (v / v_des).powf(p.exponent);
    let interaction = leader.map_or(0.0, |l| {
        let dv = v - l.speed;
        let desired_gap = p.min_gap
            + (v * p.time_headway + v * dv / (2.0 * (p.max_accel * p.comfort_decel).sqrt())).max(0.0);
        (desired_gap / l.gap.max(MIN_GAP_FLOOR)).powi(2)
    });
    (p.max_accel * (free - interaction)).clamp(-p.max_decel, p.max_accel)
}

/// Lateral offset program of a driven vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lateral {
    Hold(f64),
    /// Quintic shift running from `start` for `duration` seconds; holds the
    /// end value afterwards.
    Shift {
        start: f64,
        duration: f64,
        coeffs: LateralCoeffs,
    },
}

impl Lateral {
    /// `(d, d_dot)` at simulation time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            Lateral::Hold(d) => (d, 0.0),
            Lateral::Shift { start, duration, coeffs } => {
                let tau = (t - start).clamp(0.0, duration);
                if t < start || t > start + duration {
                    (coeffs.position(tau), 0.0)
                } else {
                    (coeffs.position(tau), coeffs.velocity(tau))
                }
            }
        }
    }
}

/// Treat a stop line as a standing leader while another driven actor has not
/// yet passed `other_clear_s` on its own path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldRule {
    pub stop_s: f64,
    pub other: usize,
    pub other_clear_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrivenVehicle {
    pub path: usize,
    pub s: f64,
    pub v: f64,
    pub lateral: Lateral,
    pub desired_speed: f64,
    pub length: f64,
    pub width: f64,
    pub yield_rule: Option<YieldRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Driven(DrivenVehicle),
    /// Poses for steps `0 ..= steps`; the last pose is held if shorter.
    Scripted { poses: Vec<Pose>, length: f64 },
}

impl Actor {
    fn length(&self) -> f64 {
        match self {
            Actor::Driven(d) => d.length,
            Actor::Scripted { length, .. } => *length,
        }
    }
}

fn driven_pose(path: &ReferencePath, veh: &DrivenVehicle, t: f64) -> Pose {
    let (d, d_dot) = veh.lateral.eval(t);
    let st = FrenetState {
        s: veh.s.clamp(0.0, path.length()),
        s_dot: veh.v,
        d,
        d_dot,
        ..Default::default()
    };
    path.frenet_to_cartesian(&st).unwrap_or_else(|_| {
        let frame = path.point_at(st.s);
        Pose {
            x: frame.position.x,
            y: frame.position.y,
            heading: frame.heading,
            speed: veh.v,
        }
    })
}

/// Runs `steps` IDM steps of `dt`; returns each actor's poses for steps
/// `0 ..= steps`.
pub fn simulate(
    paths: &[ReferencePath],
    actors: &[Actor],
    params: &IdmParams,
    steps: usize,
    dt: f64,
) -> Vec<Vec<Pose>> {
    let mut actors = actors.to_vec();
    let mut out: Vec<Vec<Pose>> = vec![Vec::with_capacity(steps + 1); actors.len()];
    for k in 0..=steps {
        let t = k as f64 * dt;
        let poses: Vec<Pose> = actors
            .iter()
            .map(|a| match a {
                Actor::Driven(v) => driven_pose(&paths[v.path], v, t),
                Actor::Scripted { poses, .. } => poses[k.min(poses.len() - 1)],
            })
            .collect();
        for (track, pose) in out.iter_mut().zip(&poses) {
            track.push(*pose);
        }
        if k == steps {
            break;
        }
        let accels: Vec<Option<f64>> = (0..actors.len())
            .map(|j| match &actors[j] {
                Actor::Driven(v) => {
                    let leader = find_leader(paths, &actors, &poses, j, t, params);
                    Some(idm_acceleration(params, v.v, v.desired_speed, leader))
                }
                Actor::Scripted { .. } => None,
            })
            .collect();
        for (actor, accel) in actors.iter_mut().zip(accels) {
            if let (Actor::Driven(v), Some(a)) = (actor, accel) {
                let v_next = v.v + a * dt;
                if v_next < 0.0 {
                    // stops within the step
                    v.s += if a < 0.0 { -v.v * v.v / (2.0 * a) } else { 0.0 };
                    v.v = 0.0;
                } else {
                    v.s += v.v * dt + 0.5 * a * dt * dt;
                    v.v = v_next;
                }
            }
        }
    }
    out
}

fn find_leader(
    paths: &[ReferencePath],
    actors: &[Actor],
    poses: &[Pose],
    j: usize,
    t: f64,
    params: &IdmParams,
) -> Option<Leader> {
    let Actor::Driven(me) = &actors[j] else {
        return None;
    };
    let path = &paths[me.path];
    let (d_me, _) = me.lateral.eval(t);
    let reach = params.lookahead + 10.0;
    let mut best: Option<(f64, Leader)> = None;
    for (o, other) in actors.iter().enumerate() {
        if o == j {
            continue;
        }
        let pose = poses[o];
        if pose.position().distance(poses[j].position()) > reach {
            continue;
        }
        let Ok(st) = path.cartesian_to_frenet_in_range(&pose, 0.0, me.s - 5.0, me.s + reach) else {
            continue;
        };
        let ds = st.s - me.s;
        if ds <= 0.0 || ds > params.lookahead || (st.d - d_me).abs() >= params.corridor_half_width {
            continue;
        }
        let frame_heading = path.point_at(st.s).heading;
        let leader = Leader {
            gap: ds - 0.5 * (me.length + other.length()),
            speed: (pose.speed * wrap_angle(pose.heading - frame_heading).cos()).max(0.0),
        };
        if best.map_or(true, |b| ds < b.0) {
            best = Some((ds, leader));
        }
    }
    if let Some(rule) = me.yield_rule {
        let blocking = match &actors[rule.other] {
            Actor::Driven(o) => o.s < rule.other_clear_s,
            Actor::Scripted { .. } => false,
        };
        let ds = rule.stop_s - me.s;
        if blocking && ds > -0.5 * me.length && best.map_or(true, |b| ds < b.0) {
            best = Some((ds, Leader { gap: ds - 0.5 * me.length, speed: 0.0 }));
        }
    }
    best.map(|b| b.1)
}

/// Desired speed inferred from an observed history: the largest observed
/// speed, raised to the lane speed limit when the agent is still accelerating.
pub fn infer_desired_speed(speeds: &[f64], speed_limit: f64) -> f64 {
    let max = speeds.iter().cloned().fold(0.0, f64::max);
    let n = speeds.len();
    if n >= 6 {
        let accel = (speeds[n - 1] - speeds[n - 6]) / (5.0 * DT);
        if accel > 0.2 {
            return max.max(speed_limit);
        }
    }
    max
}

/// Rolls every agent of `ctx` forward with IDM along its lane while the AV
/// follows `plan`. Vehicles without a lane, pedestrians and cyclists fall
/// back to CTRV. Returns `T_F` positions per agent.
pub fn idm_reactive_rollout(ctx: &SceneContext, plan: &[Pose], params: &IdmParams) -> Vec<Vec<Point2>> {
    let paths: Vec<ReferencePath> = ctx.lane_paths.iter().map(|(_, p)| p.clone()).collect();
    let mut actors = Vec::with_capacity(ctx.agents.len() + 1);
    for agent in &ctx.agents {
        let current = agent.current();
        let lane = (agent.kind == AgentKind::Vehicle)
            .then(|| ctx.assign_lane(current, 2.0 * params.corridor_half_width))
            .flatten();
        let actor = match lane {
            Some((k, s, d)) => {
                let path = &paths[k];
                let heading = path.point_at(s).heading;
                let speeds: Vec<f64> = agent.states.iter().map(|s| s.speed).collect();
                Actor::Driven(DrivenVehicle {
                    path: k,
                    s,
                    v: (current.speed * wrap_angle(current.heading - heading).cos()).max(0.0),
                    lateral: Lateral::Hold(d),
                    desired_speed: infer_desired_speed(&speeds, path.speed_limit()),
                    length: agent.length,
                    width: agent.width,
                    yield_rule: None,
                })
            }
            None => {
                let mut poses = vec![current.pose()];
                poses.extend(
                    ctrv::ctrv_track(agent)
                        .into_iter()
                        .map(|p| Pose { x: p.x, y: p.y, heading: current.heading, speed: current.speed }),
                );
                Actor::Scripted { poses, length: agent.length }
            }
        };
        actors.push(actor);
    }
    let mut av_poses = Vec::with_capacity(plan.len() + 1);
    av_poses.push(ctx.av.current().pose());
    av_poses.extend_from_slice(plan);
    actors.push(Actor::Scripted { poses: av_poses, length: ctx.av.length });

    let tracks = simulate(&paths, &actors, params, T_F, DT);
    tracks
        .into_iter()
        .take(ctx.agents.len())
        .map(|t| t[1..].iter().map(Pose::position).collect())
        .collect()
}
