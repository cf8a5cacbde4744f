//! Constant turn rate and velocity kinematics.

use super::{PredictedFutures, SceneContext};
use crate::geometry::{wrap_angle, Point2, Pose};
use crate::{DT, T_F};

/// Below this yaw rate (rad/s) the chord approximation is used.
pub const STRAIGHT_YAW_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtrvState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl CtrvState {
    /// Current state with the yaw rate taken from the last two headings.
    pub fn from_history(previous: &Pose, current: &Pose, dt: f64) -> Self {
        Self {
            x: current.x,
            y: current.y,
            heading: current.heading,
            speed: current.speed,
            yaw_rate: wrap_angle(current.heading - previous.heading) / dt,
        }
    }

    /// Closed-form state after `t` seconds.
    pub fn at(&self, t: f64) -> Pose {
        let heading = self.heading + self.yaw_rate * t;
        let (x, y) = if self.yaw_rate.abs() < STRAIGHT_YAW_RATE {
            let mid = self.heading + 0.5 * self.yaw_rate * t;
            (self.x + self.speed * t * mid.cos(), self.y + self.speed * t * mid.sin())
        } else {
            let r = self.speed / self.yaw_rate;
            (
                self.x + r * (heading.sin() - self.heading.sin()),
                self.y + r * (self.heading.cos() - heading.cos()),
            )
        };
        Pose {
            x,
            y,
            heading,
            speed: self.speed,
        }
    }
}

/// Poses at `dt, 2 dt, ..., steps * dt`.
pub fn ctrv_rollout(state: &CtrvState, steps: usize, dt: f64) -> Vec<Pose> {
    (1..=steps).map(|k| state.at(k as f64 * dt)).collect()
}

pub(crate) fn ctrv_track(history: &super::AgentHistory) -> Vec<Point2> {
    let n = history.states.len();
    let state = if n >= 2 {
        CtrvState::from_history(&history.states[n - 2].pose(), &history.states[n - 1].pose(), DT)
    } else {
        let c = history.current();
        CtrvState { x: c.x, y: c.y, heading: c.heading, speed: c.speed, yaw_rate: 0.0 }
    };
    ctrv_rollout(&state, T_F, DT).iter().map(Pose::position).collect()
}

pub(crate) fn predict_ctrv(ctx: &SceneContext, num_modes: usize) -> PredictedFutures {
    let tracks: Vec<Vec<Point2>> = ctx.agents.iter().map(ctrv_track).collect();
    PredictedFutures::from_tracks(&tracks, num_modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Explicit midpoint integration of the CTRV ODE.
    fn integrate(state: &CtrvState, horizon: f64, dt: f64) -> (f64, f64) {
        let (mut x, mut y, mut th) = (state.x, state.y, state.heading);
        let steps = (horizon / dt).round() as usize;
        for _ in 0..steps {
            let mid = th + 0.5 * state.yaw_rate * dt;
            x += state.speed * mid.cos() * dt;
            y += state.speed * mid.sin() * dt;
            th += state.yaw_rate * dt;
        }
        (x, y)
    }

    #[test]
    fn straight_north() {
        let s = CtrvState { x: 1.0, y: 2.0, heading: FRAC_PI_2, speed: 5.0, yaw_rate: 0.0 };
        for (k, p) in ctrv_rollout(&s, 50, 0.1).iter().enumerate() {
            assert!((p.x - 1.0).abs() < 1e-12);
            assert!((p.y - (2.0 + 5.0 * 0.1 * (k + 1) as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn rest_is_stationary() {
        let s = CtrvState { x: 3.0, y: -1.0, heading: 0.3, speed: 0.0, yaw_rate: 0.2 };
        assert!(ctrv_rollout(&s, 50, 0.1).iter().all(|p| p.x == 3.0 && p.y == -1.0));
    }

    #[test]
    fn turning_matches_fine_integration() {
        let s = CtrvState { x: 0.0, y: 0.0, heading: 0.0, speed: 10.0, yaw_rate: 0.1 };
        let end = *ctrv_rollout(&s, 50, 0.1).last().unwrap();
        let (x, y) = integrate(&s, 5.0, 1e-3);
        assert!((end.x - x).abs() < 1e-4 && (end.y - y).abs() < 1e-4);
        // on the 100 m circle centered at (0, 100)
        assert!((Point2::new(end.x, end.y - 100.0).norm() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_yaw_rate_is_continuous_with_straight_branch() {
        let a = CtrvState { x: 0.0, y: 0.0, heading: 0.2, speed: 8.0, yaw_rate: 0.99e-4 };
        let b = CtrvState { yaw_rate: 1.01e-4, ..a };
        let (pa, pb) = (a.at(5.0), b.at(5.0));
        assert!(pa.position().distance(pb.position()) < 1e-2);
    }
}
