//! Arc-length parameterized reference paths and conversion between Cartesian
//! poses and Frenet states.
//!
//! A path is resampled so that no two consecutive waypoints are more than
//! [`MAX_SPACING`] apart. Heading and curvature are finite differences over the
//! resampled polyline. Positions between waypoints are linear, heading and
//! curvature are interpolated linearly in arc length, and the lateral offset is
//! measured along the normal of the interpolated heading. The projection in
//! [`ReferencePath::cartesian_to_frenet`] inverts exactly that construction, so
//! a Frenet -> Cartesian -> Frenet roundtrip is limited only by the Newton
//! tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Point2, Pose};

/// Resampling guarantee for consecutive waypoints (m).
pub const MAX_SPACING: f64 = 1.0;
/// Minimum usable path length (m).
pub const MIN_PATH_LENGTH: f64 = 1.0;
/// Largest admissible distance between a pose and its projection (m).
pub const LATERAL_CORRIDOR: f64 = 20.0;

const DUPLICATE_EPS: f64 = 1e-9;
const S_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrenetError {
    #[error("degenerate path: {0}")]
    DegeneratePath(String),
    #[error("projection out of range: {0}")]
    ProjectionOutOfRange(String),
    #[error("curvature singularity: |d * kappa| = {0:.4} >= 1")]
    CurvatureSingularity(f64),
}

/// Longitudinal and lateral state in the frame of a [`ReferencePath`].
///
/// `d` is positive to the left of the path tangent. Dotted fields are time
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

impl FrenetState {
    pub fn is_finite(&self) -> bool {
        [self.s, self.s_dot, self.s_ddot, self.d, self.d_dot, self.d_ddot]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// A point on the path with its local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub position: Point2,
    pub heading: f64,
    pub curvature: f64,
}

impl PathPoint {
    fn tangent(&self) -> Point2 {
        Point2::new(self.heading.cos(), self.heading.sin())
    }

    fn normal(&self) -> Point2 {
        Point2::new(-self.heading.sin(), self.heading.cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    waypoints: Vec<Point2>,
    arclength: Vec<f64>,
    /// Unwrapped, so consecutive values never jump by more than pi.
    heading: Vec<f64>,
    curvature: Vec<f64>,
    speed_limit: f64,
}

impl ReferencePath {
    /// Resamples `polyline` to at most [`MAX_SPACING`] between waypoints and
    /// computes heading and curvature by finite differences.
    pub fn build(polyline: &[Point2], speed_limit: f64) -> Result<Self, FrenetError> {
        if polyline.iter().any(|p| !p.is_finite()) || !speed_limit.is_finite() {
            return Err(FrenetError::DegeneratePath("non-finite input".into()));
        }
        let mut distinct: Vec<Point2> = Vec::with_capacity(polyline.len());
        for &p in polyline {
            if distinct.last().map_or(true, |q| q.distance(p) > DUPLICATE_EPS) {
                distinct.push(p);
            }
        }
        if distinct.len() < 2 {
            return Err(FrenetError::DegeneratePath(
                "fewer than two distinct points".into(),
            ));
        }

        let mut waypoints = vec![distinct[0]];
        for pair in distinct.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pieces = (a.distance(b) / MAX_SPACING).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                waypoints.push(a.lerp(b, k as f64 / pieces as f64));
            }
        }

        let mut arclength = Vec::with_capacity(waypoints.len());
        arclength.push(0.0);
        for pair in waypoints.windows(2) {
            let last = *arclength.last().unwrap();
            arclength.push(last + pair[0].distance(pair[1]));
        }
        let length = *arclength.last().unwrap();
        if length < MIN_PATH_LENGTH {
            return Err(FrenetError::DegeneratePath(format!(
                "length {length:.3} m is below {MIN_PATH_LENGTH} m"
            )));
        }

        let n = waypoints.len();
        let xs: Vec<f64> = waypoints.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = waypoints.iter().map(|p| p.y).collect();
        let dx = derivative(&arclength, &xs);
        let dy = derivative(&arclength, &ys);
        let mut heading: Vec<f64> = (0..n).map(|i| dy[i].atan2(dx[i])).collect();
        unwrap_in_place(&mut heading);
        let curvature = derivative(&arclength, &heading);

        Ok(Self {
            waypoints,
            arclength,
            heading,
            curvature,
            speed_limit,
        })
    }

    pub fn waypoints(&self) -> &[Point2] {
        &self.waypoints
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn headings(&self) -> &[f64] {
        &self.heading
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvature
    }

    pub fn speed_limit(&self) -> f64 {
        self.speed_limit
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    /// Index `i` of the segment `[i, i+1]` containing `s` (clamped to the path).
    fn segment_at(&self, s: f64) -> usize {
        let last = self.waypoints.len() - 2;
        match self
            .arclength
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Interpolated frame at arc length `s`, clamped to `[0, length]`.
    pub fn point_at(&self, s: f64) -> PathPoint {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (s0, s1) = (self.arclength[i], self.arclength[i + 1]);
        let t = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        PathPoint {
            position: self.waypoints[i].lerp(self.waypoints[i + 1], t),
            heading: self.heading[i] + t * (self.heading[i + 1] - self.heading[i]),
            curvature: self.curvature[i] + t * (self.curvature[i + 1] - self.curvature[i]),
        }
    }

    /// Arc length and distance of the closest point on the polyline.
    pub fn nearest(&self, p: Point2) -> (f64, f64) {
        self.nearest_in_segments(p, 0, self.waypoints.len() - 1)
    }

    /// Like [`nearest`](Self::nearest) but only searching segments that
    /// overlap `[s_lo, s_hi]`.
    pub fn nearest_in_range(&self, p: Point2, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let lo = self.segment_at(s_lo);
        let hi = self.segment_at(s_hi) + 1;
        self.nearest_in_segments(p, lo, hi)
    }

    fn nearest_in_segments(&self, p: Point2, lo: usize, hi: usize) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in lo..hi {
            let a = self.waypoints[i];
            let ab = self.waypoints[i + 1] - a;
            let len2 = ab.dot(ab);
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let dist = (a + ab * t).distance(p);
            if dist < best.1 {
                best = (self.arclength[i] + t * (self.arclength[i + 1] - self.arclength[i]), dist);
            }
        }
        best
    }

    /// Solves for `s` such that `p - r(s)` is normal to the interpolated
    /// heading at `s`, starting from the polyline projection.
    fn refine_projection(&self, p: Point2, s_init: f64) -> f64 {
        let length = self.length();
        let mut s = s_init;
        for _ in 0..50 {
            let frame = self.point_at(s);
            let offset = p - frame.position;
            let along = offset.dot(frame.tangent());
            let d = offset.dot(frame.normal());
            let denom = (1.0 - frame.curvature * d).max(0.1);
            let next = (s + along / denom).clamp(0.0, length);
            if (next - s).abs() < 1e-13 {
                return next;
            }
            s = next;
        }
        s
    }

    /// Converts a Cartesian pose into a Frenet state.
    ///
    /// Acceleration is treated as tangential to the heading. The pose's own
    /// path curvature is not part of the input, so the normal component of
    /// acceleration is not represented.
    pub fn cartesian_to_frenet(&self, pose: &Pose, accel: f64) -> Result<FrenetState, FrenetError> {
        self.frenet_from_projection(pose, accel, self.nearest(pose.position()))
    }

    /// [`cartesian_to_frenet`](Self::cartesian_to_frenet) restricted to the
    /// part of the path within `[s_lo, s_hi]`.
    pub fn cartesian_to_frenet_in_range(
        &self,
        pose: &Pose,
        accel: f64,
        s_lo: f64,
        s_hi: f64,
    ) -> Result<FrenetState, FrenetError> {
        self.frenet_from_projection(pose, accel, self.nearest_in_range(pose.position(), s_lo, s_hi))
    }

    fn frenet_from_projection(
        &self,
        pose: &Pose,
        accel: f64,
        (s0, dist): (f64, f64),
    ) -> Result<FrenetState, FrenetError> {
        if dist > LATERAL_CORRIDOR {
            return Err(FrenetError::ProjectionOutOfRange(format!(
                "pose is {dist:.2} m from the path"
            )));
        }
        let s = self.refine_projection(pose.position(), s0);
        let frame = self.point_at(s);
        let d = (pose.position() - frame.position).dot(frame.normal());
        let one_minus_kd = 1.0 - frame.curvature * d;
        if one_minus_kd <= 0.0 {
            return Err(FrenetError::CurvatureSingularity((frame.curvature * d).abs()));
        }
        let delta = wrap_angle(pose.heading - frame.heading);
        let (sin_d, cos_d) = delta.sin_cos();
        Ok(FrenetState {
            s,
            s_dot: pose.speed * cos_d / one_minus_kd,
            s_ddot: accel * cos_d / one_minus_kd,
            d,
            d_dot: pose.speed * sin_d,
            d_ddot: accel * sin_d,
        })
    }

    /// Converts a Frenet state back to a Cartesian pose.
    pub fn frenet_to_cartesian(&self, state: &FrenetState) -> Result<Pose, FrenetError> {
        let length = self.length();
        if !(state.s >= -S_EPS && state.s <= length + S_EPS) {
            return Err(FrenetError::ProjectionOutOfRange(format!(
                "s = {:.3} outside [0, {length:.3}]",
                state.s
            )));
        }
        let frame = self.point_at(state.s);
        let one_minus_kd = 1.0 - frame.curvature * state.d;
        if one_minus_kd <= 0.0 {
            return Err(FrenetError::CurvatureSingularity(
                (frame.curvature * state.d).abs(),
            ));
        }
        let position = frame.position + frame.normal() * state.d;
        let along = one_minus_kd * state.s_dot;
        let speed = along.hypot(state.d_dot);
        let heading = if speed > 0.0 {
            frame.heading + state.d_dot.atan2(along)
        } else {
            frame.heading
        };
        Ok(Pose {
            x: position.x,
            y: position.y,
            heading,
            speed,
        })
    }

    /// Signed lateral offset and arc length of `p`, without derivative terms.
    pub fn project(&self, p: Point2) -> Result<(f64, f64), FrenetError> {
        let pose = Pose {
            x: p.x,
            y: p.y,
            heading: 0.0,
            speed: 0.0,
        };
        let st = self.cartesian_to_frenet(&pose, 0.0)?;
        Ok((st.s, st.d))
    }
}

/// First derivative of `values` w.r.t. `grid`: three-point central differences
/// in the interior, three-point one-sided differences at the ends.
fn derivative(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 2 {
        let g = (values[1] - values[0]) / (grid[1] - grid[0]);
        return vec![g, g];
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        out[i] = (values[i + 1] * h0 * h0 - values[i - 1] * h1 * h1
            + values[i] * (h1 * h1 - h0 * h0))
            / (h0 * h1 * (h0 + h1));
    }
    // quadratic through the first (last) three points, differentiated at the end
    let one_sided = |x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64| {
        let (h1, h2) = (x1 - x0, x2 - x0);
        -y0 * (h1 + h2) / (h1 * h2) + y1 * h2 / (h1 * (h2 - h1)) - y2 * h1 / (h2 * (h2 - h1))
    };
    out[0] = one_sided(grid[0], grid[1], grid[2], values[0], values[1], values[2]);
    out[n - 1] = -one_sided(
        -grid[n - 1],
        -grid[n - 2],
        -grid[n - 3],
        values[n - 1],
        values[n - 2],
        values[n - 3],
    );
    out
}

fn unwrap_in_place(angles: &mut [f64]) {
    for i in 1..angles.len() {
        angles[i] = angles[i - 1] + wrap_angle(angles[i] - angles[i - 1]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn straight() -> ReferencePath {
        ReferencePath::build(&[Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)], 15.0).unwrap()
    }

    fn arc(radius: f64, spacing: f64, sweep: f64) -> ReferencePath {
        let n = (radius * sweep / spacing).round() as usize;
        let pts: Vec<Point2> = (0..=n)
            .map(|i| {
                let a = -PI / 2.0 + sweep * i as f64 / n as f64;
                Point2::new(radius * a.cos(), radius + radius * a.sin())
            })
            .collect();
        ReferencePath::build(&pts, 10.0).unwrap()
    }

    #[test]
    fn straight_segment_has_zero_heading_and_curvature() {
        let path = straight();
        assert!((path.length() - 100.0).abs() < 1e-12);
        assert!(path.headings().iter().all(|h| h.abs() < 1e-12));
        assert!(path.curvatures().iter().all(|k| k.abs() < 1e-12));
        for pair in path.waypoints().windows(2) {
            assert!(pair[0].distance(pair[1]) <= MAX_SPACING + 1e-12);
        }
        assert_eq!(path.cumulative_arclength()[0], 0.0);
    }

    #[test]
    fn arc_curvature_matches_inverse_radius() {
        let path = arc(50.0, 0.5, 1.5);
        for k in path.curvatures() {
            assert!((k - 0.02).abs() < 1e-3, "curvature {k}");
        }
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let p = Point2::new(3.0, 4.0);
        assert!(matches!(
            ReferencePath::build(&[p, p], 10.0),
            Err(FrenetError::DegeneratePath(_))
        ));
        assert!(matches!(
            ReferencePath::build(&[p, Point2::new(3.5, 4.0)], 10.0),
            Err(FrenetError::DegeneratePath(_))
        ));
    }

    #[test]
    fn on_path_point_projects_exactly() {
        let path = straight();
        let pose = Pose { x: 10.0, y: 0.0, heading: 0.0, speed: 5.0 };
        let st = path.cartesian_to_frenet(&pose, 0.0).unwrap();
        assert!((st.s - 10.0).abs() < 1e-12);
        assert!(st.d.abs() < 1e-12);
        assert!((st.s_dot - 5.0).abs() < 1e-12);
        assert!(st.d_dot.abs() < 1e-12);
    }

    #[test]
    fn left_of_tangent_is_positive() {
        let path = straight();
        let pose = Pose { x: 10.0, y: 2.0, heading: 0.0, speed: 0.0 };
        let st = path.cartesian_to_frenet(&pose, 0.0).unwrap();
        assert!((st.s - 10.0).abs() < 1e-12);
        assert!((st.d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn far_pose_is_out_of_range() {
        let path = straight();
        let pose = Pose { x: 10.0, y: 25.0, heading: 0.0, speed: 0.0 };
        assert!(matches!(
            path.cartesian_to_frenet(&pose, 0.0),
            Err(FrenetError::ProjectionOutOfRange(_))
        ));
    }

    #[test]
    fn frenet_to_cartesian_on_straight_path() {
        let path = straight();
        let st = FrenetState { s: 10.0, s_dot: 5.0, ..Default::default() };
        let pose = path.frenet_to_cartesian(&st).unwrap();
        assert!((pose.x - 10.0).abs() < 1e-12 && pose.y.abs() < 1e-12);
        assert!(pose.heading.abs() < 1e-12);
        assert!((pose.speed - 5.0).abs() < 1e-12);

        let beyond = FrenetState { s: 100.5, ..Default::default() };
        assert!(matches!(
            path.frenet_to_cartesian(&beyond),
            Err(FrenetError::ProjectionOutOfRange(_))
        ));
    }

    #[test]
    fn lane_change_state_roundtrips_on_straight_path() {
        let path = straight();
        let st = FrenetState { s: 10.0, s_dot: 8.0, s_ddot: 0.0, d: 3.5, d_dot: 0.7, d_ddot: 0.0 };
        let pose = path.frenet_to_cartesian(&st).unwrap();
        let back = path.cartesian_to_frenet(&pose, 0.0).unwrap();
        assert!((back.s - st.s).abs() < 1e-6);
        assert!((back.d - st.d).abs() < 1e-6);
        assert!((back.s_dot - st.s_dot).abs() < 1e-6);
        assert!((back.d_dot - st.d_dot).abs() < 1e-6);
    }

    #[test]
    fn inside_arc_roundtrip() {
        let path = arc(50.0, 0.5, 1.5);
        let st = FrenetState { s: 30.0, s_dot: 6.0, d: 1.0, ..Default::default() };
        let pose = path.frenet_to_cartesian(&st).unwrap();
        let back = path.cartesian_to_frenet(&pose, 0.0).unwrap();
        assert!((back.s - st.s).abs() < 1e-3 && (back.d - st.d).abs() < 1e-3);
    }

    #[test]
    fn singular_offset_is_rejected() {
        let path = arc(20.0, 0.5, 1.0);
        let st = FrenetState { s: 10.0, d: 20.5, ..Default::default() };
        assert!(matches!(
            path.frenet_to_cartesian(&st),
            Err(FrenetError::CurvatureSingularity(_))
        ));
    }

    #[test]
    fn circle_curvature_within_five_percent() {
        for radius in [20.0, 35.0, 80.0, 150.0, 300.0, 500.0] {
            let path = arc(radius, 1.0, 60.0 / radius);
            for k in path.curvatures() {
                assert!((k * radius - 1.0).abs() < 0.05, "R={radius} kappa={k}");
            }
        }
    }
}
