//! Scenario data model: map, agent tracks, AV identity and ground truth.

mod io;
pub mod synth;
mod windows;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::{FrenetError, ReferencePath};
use crate::geometry::{Point2, Pose};
use crate::{DT, TRACK_LEN, T_F, T_H};

pub use io::{load_scenarios, parse_scenarios, save_scenarios, write_scenarios};
pub use synth::{synthesize_scenarios, Template};
pub use windows::{filter_for_irl, split_windows, RawTrack, RawTrackSet, IRL_MIN_MEAN_SPEED};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error in record {record} (line {line}): {message}")]
    Parse {
        record: usize,
        line: usize,
        message: String,
    },
    #[error("validation error in record {record}: {message}")]
    Validation { record: usize, message: String },
    #[error("track too short: {len} steps, a window needs {needed}")]
    TooShort { len: usize, needed: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

/// Physical state of one agent at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub kind: AgentKind,
}

impl AgentState {
    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
            speed: self.speed,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Per-step arrays for one agent, all of length [`TRACK_LEN`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTrack {
    pub id: u64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub heading: Vec<f64>,
    pub speed: Vec<f64>,
}

impl AgentTrack {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn state(&self, step: usize) -> AgentState {
        AgentState {
            x: self.x[step],
            y: self.y[step],
            heading: self.heading[step],
            speed: self.speed[step],
            length: self.length,
            width: self.width,
            kind: self.kind,
        }
    }

    pub fn pose(&self, step: usize) -> Pose {
        Pose {
            x: self.x[step],
            y: self.y[step],
            heading: self.heading[step],
            speed: self.speed[step],
        }
    }

    /// Poses of the future part of the window (steps `T_H+1 ..= T_H+T_F`).
    pub fn future(&self) -> Vec<Pose> {
        (T_H + 1..=T_H + T_F).map(|t| self.pose(t)).collect()
    }

    pub fn push(&mut self, pose: Pose) {
        self.x.push(pose.x);
        self.y.push(pose.y);
        self.heading.push(pose.heading);
        self.speed.push(pose.speed);
    }

    pub fn empty(id: u64, kind: AgentKind, length: f64, width: f64) -> Self {
        Self {
            id,
            kind,
            length,
            width,
            x: Vec::new(),
            y: Vec::new(),
            heading: Vec::new(),
            speed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: usize,
    pub points: Vec<[f64; 2]>,
    pub speed_limit: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl Lane {
    pub fn polyline(&self) -> Vec<Point2> {
        self.points.iter().map(|p| Point2::new(p[0], p[1])).collect()
    }

    pub fn reference_path(&self) -> Result<ReferencePath, FrenetError> {
        ReferencePath::build(&self.polyline(), self.speed_limit)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapModel {
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub crosswalks: Vec<Vec<[f64; 2]>>,
}

impl MapModel {
    pub fn lane(&self, id: usize) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn lane_index(&self, id: usize) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub map: MapModel,
    pub agents: Vec<AgentTrack>,
    pub av_index: usize,
    pub timestep_s: f64,
}

impl Scenario {
    pub fn av(&self) -> &AgentTrack {
        &self.agents[self.av_index]
    }

    /// Indices of every agent except the AV, in file order.
    pub fn other_indices(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| i != self.av_index).collect()
    }

    pub fn av_current(&self) -> AgentState {
        self.av().state(T_H)
    }

    /// Backward-difference acceleration of the AV at the current step.
    pub fn av_current_accel(&self) -> f64 {
        let av = self.av();
        (av.speed[T_H] - av.speed[T_H - 1]) / DT
    }

    pub fn av_future(&self) -> Vec<Pose> {
        self.av().future()
    }

    /// Mean AV speed over the full window.
    pub fn av_mean_speed(&self) -> f64 {
        let speeds = &self.av().speed;
        speeds.iter().sum::<f64>() / speeds.len() as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if (self.timestep_s - DT).abs() > 1e-12 {
            return Err(format!("timestep_s must be {DT}, got {}", self.timestep_s));
        }
        if self.agents.is_empty() {
            return Err("no agents".into());
        }
        if self.av_index >= self.agents.len() {
            return Err(format!(
                "av_index {} out of range for {} agents",
                self.av_index,
                self.agents.len()
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.length > 0.0 && a.width > 0.0 && a.length.is_finite() && a.width.is_finite()) {
                return Err(format!("agent {i}: length and width must be positive"));
            }
            for (name, arr) in [("x", &a.x), ("y", &a.y), ("heading", &a.heading), ("speed", &a.speed)] {
                if arr.len() != TRACK_LEN {
                    return Err(format!(
                        "agent {i}: {name} has {} steps, expected {TRACK_LEN}",
                        arr.len()
                    ));
                }
                if arr.iter().any(|v| !v.is_finite()) {
                    return Err(format!("agent {i}: non-finite {name}"));
                }
            }
            if a.speed.iter().any(|&v| v < 0.0) {
                return Err(format!("agent {i}: negative speed"));
            }
        }
        let mut ids: Vec<usize> = self.map.lanes.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate lane id".into());
        }
        for lane in &self.map.lanes {
            if !(lane.speed_limit > 0.0 && lane.speed_limit.is_finite()) {
                return Err(format!("lane {}: speed_limit must be positive", lane.id));
            }
            lane.reference_path()
                .map_err(|e| format!("lane {}: {e}", lane.id))?;
            if let Some(l) = lane.left {
                match self.map.lane(l) {
                    Some(n) if n.right == Some(lane.id) => {}
                    _ => return Err(format!("lane {}: left neighbor {l} is not symmetric", lane.id)),
                }
            }
            if let Some(r) = lane.right {
                match self.map.lane(r) {
                    Some(n) if n.left == Some(lane.id) => {}
                    _ => return Err(format!("lane {}: right neighbor {r} is not symmetric", lane.id)),
                }
            }
        }
        for (i, cw) in self.map.crosswalks.iter().enumerate() {
            if cw.len() < 3 || cw.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("crosswalk {i}: needs at least three finite vertices"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight_lane(id: usize, y: f64, left: Option<usize>, right: Option<usize>) -> Lane {
        Lane {
            id,
            points: vec![[-50.0, y], [250.0, y]],
            speed_limit: 13.5,
            left,
            right,
        }
    }

    fn constant_track(id: u64, x0: f64, y: f64, v: f64) -> AgentTrack {
        let mut t = AgentTrack::empty(id, AgentKind::Vehicle, 4.8, 2.0);
        for k in 0..TRACK_LEN {
            t.push(Pose { x: x0 + v * DT * k as f64, y, heading: 0.0, speed: v });
        }
        t
    }

    fn sample() -> Scenario {
        Scenario {
            map: MapModel {
                lanes: vec![straight_lane(0, 0.0, Some(1), None), straight_lane(1, 3.5, None, Some(0))],
                crosswalks: vec![],
            },
            agents: vec![constant_track(1, 0.0, 0.0, 10.0), constant_track(2, 20.0, 0.0, 8.0)],
            av_index: 0,
            timestep_s: DT,
        }
    }

    #[test]
    fn sample_is_valid() {
        sample().validate().unwrap();
    }

    #[test]
    fn asymmetric_adjacency_is_invalid() {
        let mut s = sample();
        s.map.lanes[1].right = None;
        assert!(s.validate().unwrap_err().contains("symmetric"));
    }

    #[test]
    fn zero_speed_limit_is_invalid() {
        let mut s = sample();
        s.map.lanes[0].speed_limit = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn short_track_is_invalid() {
        let mut s = sample();
        s.agents[1].x.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn future_has_horizon_length() {
        let s = sample();
        assert_eq!(s.av_future().len(), T_F);
        assert!((s.av_future()[0].x - 10.0 * DT * (T_H + 1) as f64).abs() < 1e-12);
    }
}
