//! Candidate behaviors: quartic longitudinal and quintic lateral profiles in
//! the Frenet frame of the AV's lane, sampled over a fixed horizon and mapped
//! back to Cartesian poses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::{FrenetError, FrenetState, ReferencePath};
use crate::geometry::{wrap_angle, Pose};
use crate::scenario::Scenario;
use crate::{DT, HORIZON, NUM_SPEED_TARGETS, T_F};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("boundary-condition system is singular (T = {0})")]
    SingularSystem(f64),
    #[error("invalid boundary conditions: {0}")]
    InvalidInput(String),
    #[error("no candidate survived conversion to Cartesian space")]
    NoValidProposal,
    #[error("AV lane: {0}")]
    NoEgoLane(String),
    #[error(transparent)]
    Frenet(#[from] FrenetError),
}

fn eval_poly(coeffs: &[f64], t: f64, order: usize) -> f64 {
    // Horner on the `order`-th derivative
    let mut acc = 0.0;
    for i in (order..coeffs.len()).rev() {
        let factor: f64 = (i - order + 1..=i).map(|k| k as f64).product();
        acc = acc * t + coeffs[i] * factor;
    }
    acc
}

/// `s(t) = a0 + a1 t + a2 t^2 + a3 t^3 + a4 t^4`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LongitudinalCoeffs(pub [f64; 5]);

/// `d(t) = b0 + b1 t + ... + b5 t^5`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LateralCoeffs(pub [f64; 6]);

macro_rules! poly_eval {
    ($ty:ty) => {
        impl $ty {
            pub fn position(&self, t: f64) -> f64 {
                eval_poly(&self.0, t, 0)
            }
            pub fn velocity(&self, t: f64) -> f64 {
                eval_poly(&self.0, t, 1)
            }
            pub fn acceleration(&self, t: f64) -> f64 {
                eval_poly(&self.0, t, 2)
            }
            pub fn jerk(&self, t: f64) -> f64 {
                eval_poly(&self.0, t, 3)
            }
        }
    };
}

poly_eval!(LongitudinalCoeffs);
poly_eval!(LateralCoeffs);

fn check_inputs(values: &[f64], horizon: f64) -> Result<(), GenerationError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(GenerationError::SingularSystem(horizon));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GenerationError::InvalidInput("non-finite boundary value".into()));
    }
    Ok(())
}

/// Quartic through `(s, s_dot, s_ddot)` at 0 and `(s_dot, s_ddot)` at `horizon`.
pub fn solve_quartic(
    init: [f64; 3],
    target: [f64; 2],
    horizon: f64,
) -> Result<LongitudinalCoeffs, GenerationError> {
    check_inputs(&[init[0], init[1], init[2], target[0], target[1]], horizon)?;
    if init[1] < 0.0 {
        return Err(GenerationError::InvalidInput("negative initial speed".into()));
    }
    let [s0, v0, a0] = init;
    let [v_t, a_t] = target;
    let t = horizon;
    let (t2, t3) = (t * t, t * t * t);
    // 3 a3 T^2 + 4 a4 T^3 = vT - v0 - a0 T
    // 6 a3 T  + 12 a4 T^2 = aT - a0
    let (m00, m01, m10, m11) = (3.0 * t2, 4.0 * t3, 6.0 * t, 12.0 * t2);
    let det = m00 * m11 - m01 * m10;
    if det.abs() < f64::EPSILON * m00.abs() * m11.abs() {
        return Err(GenerationError::SingularSystem(horizon));
    }
    let r0 = v_t - v0 - a0 * t;
    let r1 = a_t - a0;
    let a3 = (r0 * m11 - m01 * r1) / det;
    let a4 = (m00 * r1 - m10 * r0) / det;
    Ok(LongitudinalCoeffs([s0, v0, a0 / 2.0, a3, a4]))
}

/// Quintic through `(d, d_dot, d_ddot)` at 0 and at `horizon`.
pub fn solve_quintic(
    init: [f64; 3],
    target: [f64; 3],
    horizon: f64,
) -> Result<LateralCoeffs, GenerationError> {
    check_inputs(&[init[0], init[1], init[2], target[0], target[1], target[2]], horizon)?;
    let [d0, v0, a0] = init;
    let t = horizon;
    let (t2, t3, t4, t5) = (t * t, t.powi(3), t.powi(4), t.powi(5));
    let m = [
        [t3, t4, t5],
        [3.0 * t2, 4.0 * t3, 5.0 * t4],
        [6.0 * t, 12.0 * t2, 20.0 * t3],
    ];
    let r = [
        target[0] - (d0 + v0 * t + 0.5 * a0 * t2),
        target[1] - (v0 + a0 * t),
        target[2] - a0,
    ];
    let x = solve3(m, r).ok_or(GenerationError::SingularSystem(horizon))?;
    Ok(LateralCoeffs([d0, v0, a0 / 2.0, x[0], x[1], x[2]]))
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    let scale: f64 = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if d.abs() <= f64::EPSILON * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = r[row];
        }
        *xc = det(&mc) / d;
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Keep,
    ChangeLeft,
    ChangeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub speed: f64,
    pub lateral_offset: f64,
    pub maneuver: Maneuver,
}

/// The AV's reference lane and the lateral offsets of its neighbors.
#[derive(Debug, Clone)]
pub struct EgoLane {
    pub lane_id: usize,
    pub path: ReferencePath,
    /// Center-to-center distance to the left neighbor, if any (positive).
    pub left_offset: Option<f64>,
    /// Center-to-center distance to the right neighbor, if any (negative).
    pub right_offset: Option<f64>,
}

impl EgoLane {
    /// Picks the lane whose centerline is nearest to the AV's current pose and
    /// heading-aligned with it.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, GenerationError> {
        let av = scenario.av_current();
        let mut best: Option<(f64, usize, ReferencePath, f64)> = None;
        for lane in &scenario.map.lanes {
            let Ok(path) = lane.reference_path() else {
                continue;
            };
            let Ok(st) = path.cartesian_to_frenet(&av.pose(), 0.0) else {
                continue;
            };
            let frame = path.point_at(st.s);
            if wrap_angle(av.heading - frame.heading).cos() <= 0.0 {
                continue;
            }
            if best.as_ref().map_or(true, |b| st.d.abs() < b.0) {
                best = Some((st.d.abs(), lane.id, path, st.s));
            }
        }
        let (_, lane_id, path, s_av) =
            best.ok_or_else(|| GenerationError::NoEgoLane("no lane near the AV".into()))?;
        let lane = scenario.map.lane(lane_id).unwrap();
        let center = path.point_at(s_av).position;
        let offset_to = |id: Option<usize>| -> Option<f64> {
            let neighbor = scenario.map.lane(id?)?.reference_path().ok()?;
            let (_, d) = neighbor.project(center).ok()?;
            Some(d.abs())
        };
        Ok(Self {
            lane_id,
            left_offset: offset_to(lane.left),
            right_offset: offset_to(lane.right).map(|d| -d),
            path,
        })
    }
}

/// `NUM_SPEED_TARGETS` evenly spaced terminal speeds in `[0, v_limit]` for
/// each reachable lateral target (keep, left, right).
pub fn enumerate_targets(ego: &EgoLane) -> Vec<Target> {
    let v_limit = ego.path.speed_limit();
    let mut lateral = vec![(0.0, Maneuver::Keep)];
    if let Some(d) = ego.left_offset {
        lateral.push((d, Maneuver::ChangeLeft));
    }
    if let Some(d) = ego.right_offset {
        lateral.push((d, Maneuver::ChangeRight));
    }
    let step = v_limit / (NUM_SPEED_TARGETS - 1) as f64;
    lateral
        .into_iter()
        .flat_map(|(offset, maneuver)| {
            (0..NUM_SPEED_TARGETS).map(move |i| Target {
                speed: step * i as f64,
                lateral_offset: offset,
                maneuver,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProposal {
    /// `T_F` poses at `DT` spacing, starting one step after the current time.
    pub states: Vec<Pose>,
    pub frenet_states: Vec<FrenetState>,
    pub lon: LongitudinalCoeffs,
    pub lat: LateralCoeffs,
    pub target_speed: f64,
    pub target_offset: f64,
    pub maneuver: Maneuver,
}

impl TrajectoryProposal {
    pub fn endpoint(&self) -> Pose {
        *self.states.last().unwrap()
    }
}

/// Samples one target into a proposal. Returns `Ok(None)` when the profile
/// leaves the path or hits the curvature guard.
pub fn build_proposal(
    path: &ReferencePath,
    init: &FrenetState,
    target: &Target,
) -> Result<Option<TrajectoryProposal>, GenerationError> {
    let lon = solve_quartic([init.s, init.s_dot.max(0.0), init.s_ddot], [target.speed, 0.0], HORIZON)?;
    let lat = solve_quintic(
        [init.d, init.d_dot, init.d_ddot],
        [target.lateral_offset, 0.0, 0.0],
        HORIZON,
    )?;
    let mut states = Vec::with_capacity(T_F);
    let mut frenet_states = Vec::with_capacity(T_F);
    let mut stopped_at: Option<f64> = None;
    let mut prev_heading: Option<f64> = None;
    for k in 1..=T_F {
        let tau = k as f64 * DT;
        let v = lon.velocity(tau);
        if stopped_at.is_none() && v < 0.0 {
            stopped_at = Some(frenet_states.last().map_or(init.s, |f: &FrenetState| f.s));
        }
        let (s, s_dot, s_ddot) = match stopped_at {
            Some(s) => (s, 0.0, 0.0),
            None => (lon.position(tau), v, lon.acceleration(tau)),
        };
        let fs = FrenetState {
            s,
            s_dot,
            s_ddot,
            d: lat.position(tau),
            d_dot: lat.velocity(tau),
            d_ddot: lat.acceleration(tau),
        };
        let mut pose = match path.frenet_to_cartesian(&fs) {
            Ok(p) => p,
            Err(FrenetError::CurvatureSingularity(_) | FrenetError::ProjectionOutOfRange(_)) => {
                return Ok(None)
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(prev) = prev_heading {
            pose.heading = prev + wrap_angle(pose.heading - prev);
        }
        prev_heading = Some(pose.heading);
        states.push(pose);
        frenet_states.push(fs);
    }
    Ok(Some(TrajectoryProposal {
        states,
        frenet_states,
        lon,
        lat,
        target_speed: target.speed,
        target_offset: target.lateral_offset,
        maneuver: target.maneuver,
    }))
}

/// One proposal per target for the AV of `scenario`, in the order of
/// [`enumerate_targets`].
pub fn generate_proposals(
    scenario: &Scenario,
    ego: &EgoLane,
) -> Result<Vec<TrajectoryProposal>, GenerationError> {
    let av = scenario.av_current();
    let init = ego.path.cartesian_to_frenet(&av.pose(), scenario.av_current_accel())?;
    let mut out = Vec::new();
    for target in enumerate_targets(ego) {
        if let Some(p) = build_proposal(&ego.path, &init, &target)? {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(GenerationError::NoValidProposal);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    #[test]
    fn constant_velocity_quartic() {
        let c = solve_quartic([0.0, 10.0, 0.0], [10.0, 0.0], 5.0).unwrap();
        for (got, want) in c.0.iter().zip([0.0, 10.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((c.position(5.0) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn braking_quartic_coefficients() {
        let c = solve_quartic([0.0, 10.0, 0.0], [0.0, 0.0], 5.0).unwrap();
        assert!((c.0[3] + 0.4).abs() < 1e-12);
        assert!((c.0[4] - 0.04).abs() < 1e-12);
        assert!((c.position(5.0) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn zero_quintic_is_identically_zero() {
        let c = solve_quintic([0.0; 3], [0.0; 3], 5.0).unwrap();
        assert!(c.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lane_change_quintic_is_symmetric() {
        let c = solve_quintic([0.0; 3], [3.5, 0.0, 0.0], 5.0).unwrap();
        assert!((c.position(2.5) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn offset_quintic_hits_endpoints() {
        let c = solve_quintic([0.3, -0.1, 0.0], [-3.5, 0.0, 0.0], 5.0).unwrap();
        assert!((c.position(0.0) - 0.3).abs() < 1e-9);
        assert!((c.velocity(0.0) + 0.1).abs() < 1e-9);
        assert!(c.acceleration(0.0).abs() < 1e-9);
        assert!((c.position(5.0) + 3.5).abs() < 1e-9);
        assert!(c.velocity(5.0).abs() < 1e-9);
        assert!(c.acceleration(5.0).abs() < 1e-9);
    }

    #[test]
    fn non_positive_horizon_is_singular() {
        assert!(matches!(
            solve_quartic([0.0, 1.0, 0.0], [1.0, 0.0], 0.0),
            Err(GenerationError::SingularSystem(_))
        ));
        assert!(matches!(
            solve_quintic([0.0; 3], [1.0, 0.0, 0.0], -1.0),
            Err(GenerationError::SingularSystem(_))
        ));
    }

    #[test]
    fn polynomial_derivatives() {
        let c = LongitudinalCoeffs([1.0, 2.0, 3.0, 4.0, 5.0]);
        let t = 1.5;
        assert!((c.position(t) - (1.0 + 2.0 * t + 3.0 * t * t + 4.0 * t.powi(3) + 5.0 * t.powi(4))).abs() < 1e-12);
        assert!((c.velocity(t) - (2.0 + 6.0 * t + 12.0 * t * t + 20.0 * t.powi(3))).abs() < 1e-12);
        assert!((c.acceleration(t) - (6.0 + 24.0 * t + 60.0 * t * t)).abs() < 1e-12);
        assert!((c.jerk(t) - (24.0 + 120.0 * t)).abs() < 1e-12);
    }

    fn ego(limit: f64, left: Option<f64>, right: Option<f64>) -> EgoLane {
        EgoLane {
            lane_id: 0,
            path: ReferencePath::build(&[Point2::new(0.0, 0.0), Point2::new(300.0, 0.0)], limit).unwrap(),
            left_offset: left,
            right_offset: right,
        }
    }

    #[test]
    fn single_lane_targets() {
        let t = enumerate_targets(&ego(13.5, None, None));
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|t| t.maneuver == Maneuver::Keep));
        assert_eq!(t[0].speed, 0.0);
        assert!((t[9].speed - 13.5).abs() < 1e-12);
    }

    #[test]
    fn three_lane_targets() {
        let t = enumerate_targets(&ego(13.5, Some(3.5), Some(-3.5)));
        assert_eq!(t.len(), 30);
        let lefts = t.iter().filter(|t| t.maneuver == Maneuver::ChangeLeft).count();
        assert_eq!(lefts, 10);
    }

    #[test]
    fn rest_start_stop_target_stays_still() {
        let e = ego(10.0, None, None);
        let init = FrenetState { s: 20.0, ..Default::default() };
        let props: Vec<_> = enumerate_targets(&e)
            .iter()
            .filter_map(|t| build_proposal(&e.path, &init, t).unwrap())
            .collect();
        assert_eq!(props.len(), 10);
        let first = &props[0];
        assert_eq!(first.states.len(), T_F);
        for p in &first.states {
            assert!((p.x - 20.0).abs() < 1e-12 && p.y.abs() < 1e-12 && p.speed == 0.0);
        }
    }

    #[test]
    fn braking_undershoot_is_clamped() {
        let e = ego(10.0, None, None);
        let init = FrenetState { s: 0.0, s_dot: 5.0, s_ddot: -4.0, ..Default::default() };
        let target = Target { speed: 0.0, lateral_offset: 0.0, maneuver: Maneuver::Keep };
        let p = build_proposal(&e.path, &init, &target).unwrap().unwrap();
        assert!(p.lon.velocity(3.0) < 0.0, "fixture should undershoot");
        assert!(p.states.iter().all(|s| s.speed >= 0.0));
        assert!(p.frenet_states.windows(2).all(|w| w[1].s >= w[0].s));
    }

    #[test]
    fn proposals_past_path_end_are_dropped() {
        let e = EgoLane {
            path: ReferencePath::build(&[Point2::new(0.0, 0.0), Point2::new(30.0, 0.0)], 10.0).unwrap(),
            ..ego(10.0, None, None)
        };
        let init = FrenetState { s: 0.0, s_dot: 5.0, ..Default::default() };
        let fast = Target { speed: 10.0, lateral_offset: 0.0, maneuver: Maneuver::Keep };
        assert!(build_proposal(&e.path, &init, &fast).unwrap().is_none());
        let stop = Target { speed: 0.0, ..fast };
        assert!(build_proposal(&e.path, &init, &stop).unwrap().is_some());
    }
}
