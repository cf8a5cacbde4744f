use serde::{Deserialize, Serialize};

use super::{AgentKind, AgentTrack, DataError, MapModel, Scenario};
use crate::geometry::Pose;

/// AV mean speed below which a scenario is excluded from IRL training (m/s).
pub const IRL_MIN_MEAN_SPEED: f64 = 3.0;

/// One agent over a long recording; `None` marks steps where it is not observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrack {
    pub id: u64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub states: Vec<Option<Pose>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrackSet {
    pub map: MapModel,
    pub tracks: Vec<RawTrack>,
    pub av_index: usize,
    pub timestep_s: f64,
}

impl RawTrackSet {
    pub fn len(&self) -> usize {
        self.tracks.iter().map(|t| t.states.len()).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cuts a long recording into fixed windows of `t_h + t_f + 1` steps.
///
/// Windows start at `0, stride, 2*stride, ...`. Windows where the AV is not
/// observed at every step are skipped. Agents never observed inside a window
/// are dropped; gaps in partially observed agents are filled by holding the
/// nearest observed state. At most `max_agents` non-AV agents are kept,
/// nearest to the AV at the current step first.
pub fn split_windows(
    raw: &RawTrackSet,
    t_h: usize,
    t_f: usize,
    stride: usize,
    max_agents: usize,
) -> Result<Vec<Scenario>, DataError> {
    let window = t_h + t_f + 1;
    let len = raw.len();
    if len < window {
        return Err(DataError::TooShort { len, needed: window });
    }
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= len {
        if let Some(s) = cut_window(raw, start, window, t_h, max_agents) {
            out.push(s);
        }
        start += stride;
    }
    Ok(out)
}

fn cut_window(
    raw: &RawTrackSet,
    start: usize,
    window: usize,
    t_h: usize,
    max_agents: usize,
) -> Option<Scenario> {
    let observed = |t: &RawTrack, k: usize| t.states.get(start + k).copied().flatten();
    let av = &raw.tracks[raw.av_index];
    if (0..window).any(|k| observed(av, k).is_none()) {
        return None;
    }
    let av_now = observed(av, t_h).unwrap().position();

    let mut candidates: Vec<(f64, usize, Vec<Pose>)> = Vec::new();
    for (i, track) in raw.tracks.iter().enumerate() {
        if i == raw.av_index {
            continue;
        }
        let obs: Vec<Option<Pose>> = (0..window).map(|k| observed(track, k)).collect();
        let Some(filled) = fill_gaps(&obs) else {
            continue;
        };
        candidates.push((filled[t_h].position().distance(av_now), i, filled));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(max_agents);
    candidates.sort_by_key(|c| c.1);

    let to_track = |i: usize, poses: &[Pose]| {
        let src = &raw.tracks[i];
        let mut t = AgentTrack::empty(src.id, src.kind, src.length, src.width);
        poses.iter().for_each(|p| t.push(*p));
        t
    };
    let av_poses: Vec<Pose> = (0..window).map(|k| observed(av, k).unwrap()).collect();
    let mut agents = Vec::with_capacity(candidates.len() + 1);
    let mut av_index = 0;
    let mut av_placed = false;
    for (_, i, poses) in &candidates {
        if !av_placed && *i > raw.av_index {
            av_index = agents.len();
            agents.push(to_track(raw.av_index, &av_poses));
            av_placed = true;
        }
        agents.push(to_track(*i, poses));
    }
    if !av_placed {
        av_index = agents.len();
        agents.push(to_track(raw.av_index, &av_poses));
    }
    Some(Scenario {
        map: raw.map.clone(),
        agents,
        av_index,
        timestep_s: raw.timestep_s,
    })
}

fn fill_gaps(obs: &[Option<Pose>]) -> Option<Vec<Pose>> {
    let first = obs.iter().position(Option::is_some)?;
    let mut last = obs[first].unwrap();
    let mut out = Vec::with_capacity(obs.len());
    for (k, o) in obs.iter().enumerate() {
        match o {
            Some(p) => {
                last = *p;
                out.push(*p);
            }
            None if k < first => out.push(obs[first].unwrap()),
            None => out.push(last),
        }
    }
    Some(out)
}

/// Keeps scenarios whose AV mean speed over the full window is at least
/// [`IRL_MIN_MEAN_SPEED`].
pub fn filter_for_irl(scenarios: Vec<Scenario>) -> Vec<Scenario> {
    scenarios
        .into_iter()
        .filter(|s| s.av_mean_speed() >= IRL_MIN_MEAN_SPEED)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DT, TRACK_LEN, T_F, T_H};

    fn raw(len: usize, others: Vec<RawTrack>) -> RawTrackSet {
        let av = RawTrack {
            id: 0,
            kind: AgentKind::Vehicle,
            length: 4.8,
            width: 2.0,
            states: (0..len)
                .map(|k| Some(Pose { x: k as f64, y: 0.0, heading: 0.0, speed: 10.0 }))
                .collect(),
        };
        let mut tracks = vec![av];
        tracks.extend(others);
        RawTrackSet { map: MapModel::default(), tracks, av_index: 0, timestep_s: DT }
    }

    fn marker(id: u64, len: usize, present: impl Fn(usize) -> bool, y: f64) -> RawTrack {
        RawTrack {
            id,
            kind: AgentKind::Vehicle,
            length: 4.0,
            width: 2.0,
            states: (0..len)
                .map(|k| present(k).then(|| Pose { x: k as f64, y, heading: 0.0, speed: k as f64 }))
                .collect(),
        }
    }

    #[test]
    fn window_starts_follow_stride() {
        let windows = split_windows(&raw(200, vec![]), T_H, T_F, 50, 10).unwrap();
        let starts: Vec<f64> = windows.iter().map(|w| w.av().x[0]).collect();
        assert_eq!(starts, vec![0.0, 50.0, 100.0]);
        for w in &windows {
            assert_eq!(w.av().len(), TRACK_LEN);
            // consecutive steps, nothing dropped or duplicated
            assert!(w.av().x.windows(2).all(|p| p[1] - p[0] == 1.0));
        }
    }

    #[test]
    fn exact_length_gives_one_window() {
        assert_eq!(split_windows(&raw(71, vec![]), T_H, T_F, 50, 10).unwrap().len(), 1);
    }

    #[test]
    fn one_step_short_is_too_short() {
        assert!(matches!(
            split_windows(&raw(70, vec![]), T_H, T_F, 50, 10),
            Err(DataError::TooShort { len: 70, needed: 71 })
        ));
    }

    #[test]
    fn absent_agents_are_dropped_and_gaps_filled() {
        let absent_first = marker(7, 200, |k| k >= 100, 3.5);
        let gappy = marker(8, 200, |k| k % 10 != 5, -3.5);
        let windows = split_windows(&raw(200, vec![absent_first, gappy]), T_H, T_F, 50, 10).unwrap();
        assert_eq!(windows[0].agents.len(), 2);
        assert_eq!(windows[2].agents.len(), 3);
        let g = windows[0].agents.iter().find(|a| a.id == 8).unwrap();
        assert_eq!(g.speed[5], 4.0);
        assert_eq!(g.speed[6], 6.0);
    }

    #[test]
    fn keeps_nearest_agents() {
        let others: Vec<RawTrack> = (1..=5)
            .map(|i| marker(i, 80, |_| true, 10.0 * i as f64))
            .collect();
        let w = &split_windows(&raw(80, others), T_H, T_F, 50, 2).unwrap()[0];
        let mut ids: Vec<u64> = w.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(w.av().id, 0);
    }

    #[test]
    fn irl_filter_threshold_is_strict() {
        let mk = |v: f64| {
            let mut s = split_windows(&raw(71, vec![]), T_H, T_F, 50, 10).unwrap().remove(0);
            s.agents[0].speed = vec![v; TRACK_LEN];
            s
        };
        let kept = filter_for_irl(vec![mk(0.0), mk(10.0), mk(2.9), mk(3.0)]);
        let speeds: Vec<f64> = kept.iter().map(|s| s.av().speed[0]).collect();
        assert_eq!(speeds, vec![10.0, 3.0]);
    }
}
