//! Top-down SVG of one scene.

use std::io::{self, Write};

use irlplan::{AgentKind, PredictedFutures, Pose, Scenario, T_H};

#[derive(Debug, Default)]
pub struct Layers {
    /// Proposal paths, best ranked first.
    pub proposals: Vec<Vec<Pose>>,
    /// Predicted futures conditioned on the best proposal.
    pub futures: Option<PredictedFutures>,
}

const RANK_COLORS: [&str; 5] = ["#1a9850", "#66bd63", "#a6d96a", "#fdae61", "#d73027"];
const WORST: &str = "#bdbdbd";
const AGENT_COLORS: [&str; 6] = ["#4575b4", "#8073ac", "#35978f", "#bf812d", "#762a83", "#01665e"];
const MARGIN: f64 = 10.0;

/// Stroke color of the proposal at `rank`; later ranks fade to gray.
pub fn rank_color(rank: usize) -> &'static str {
    RANK_COLORS.get(rank).copied().unwrap_or(WORST)
}

struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn new() -> Self {
        Self { min_x: f64::INFINITY, max_x: f64::NEG_INFINITY, min_y: f64::INFINITY, max_y: f64::NEG_INFINITY }
    }

    fn add(&mut self, x: f64, y: f64) {
        if x.is_finite() && y.is_finite() {
            self.min_x = self.min_x.min(x);
            self.max_x = self.max_x.max(x);
            self.min_y = self.min_y.min(y);
            self.max_y = self.max_y.max(y);
        }
    }

    fn finish(mut self) -> Self {
        if !self.min_x.is_finite() {
            self = Self { min_x: 0.0, max_x: 1.0, min_y: 0.0, max_y: 1.0 };
        }
        self.min_x -= MARGIN;
        self.max_x += MARGIN;
        self.min_y -= MARGIN;
        self.max_y += MARGIN;
        self
    }
}

fn points<'a>(pts: impl IntoIterator<Item = (f64, f64)> + 'a) -> String {
    let mut s = String::new();
    for (x, y) in pts {
        if !s.is_empty() {
            s.push(' ');
        }
        // y is negated so north is up.
        s.push_str(&format!("{:.2},{:.2}", x, 0.0 - y));
    }
    s
}

fn polyline<W: Write>(w: &mut W, pts: String, stroke: &str, width: f64, extra: &str) -> io::Result<()> {
    if pts.is_empty() {
        return Ok(());
    }
    writeln!(
        w,
        r#"<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"{extra}/>"#
    )
}

pub fn render<W: Write>(w: &mut W, scenario: &Scenario, layers: &Layers) -> io::Result<()> {
    let mut b = Bounds::new();
    for lane in &scenario.map.lanes {
        lane.points.iter().for_each(|p| b.add(p[0], p[1]));
    }
    for cw in &scenario.map.crosswalks {
        cw.iter().for_each(|p| b.add(p[0], p[1]));
    }
    for a in &scenario.agents {
        a.x.iter().zip(&a.y).for_each(|(&x, &y)| b.add(x, y));
    }
    for p in layers.proposals.iter().flatten() {
        b.add(p.x, p.y);
    }
    let b = b.finish();
    let (width, height) = (b.max_x - b.min_x, b.max_y - b.min_y);

    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.2} {:.2} {:.2} {:.2}" width="{:.0}" height="{:.0}">"#,
        b.min_x,
        -b.max_y,
        width,
        height,
        (width * 8.0).clamp(200.0, 2000.0),
        (height * 8.0).clamp(200.0, 2000.0)
    )?;
    writeln!(w, r#"<rect x="{:.2}" y="{:.2}" width="{width:.2}" height="{height:.2}" fill="white"/>"#, b.min_x, -b.max_y)?;

    writeln!(w, r#"<g id="map">"#)?;
    for cw in &scenario.map.crosswalks {
        writeln!(
            w,
            r##"<polygon points="{}" fill="#eeeeee" stroke="#cccccc" stroke-width="0.2"/>"##,
            points(cw.iter().map(|p| (p[0], p[1])))
        )?;
    }
    for lane in &scenario.map.lanes {
        polyline(w, points(lane.points.iter().map(|p| (p[0], p[1]))), "#d0d0d0", 3.5, r#" stroke-linecap="round""#)?;
        polyline(w, points(lane.points.iter().map(|p| (p[0], p[1]))), "#909090", 0.15, r#" stroke-dasharray="1 1""#)?;
    }
    writeln!(w, "</g>")?;

    writeln!(w, r#"<g id="proposals">"#)?;
    for (rank, plan) in layers.proposals.iter().enumerate().rev() {
        let width = if rank == 0 { 0.6 } else { 0.25 };
        polyline(w, points(plan.iter().map(|p| (p.x, p.y))), rank_color(rank), width, &format!(r#" data-rank="{rank}""#))?;
    }
    writeln!(w, "</g>")?;

    writeln!(w, r#"<g id="agents">"#)?;
    let mut color = 0;
    for (i, a) in scenario.agents.iter().enumerate() {
        if a.len() <= T_H {
            continue;
        }
        let fill = if i == scenario.av_index {
            "#e41a1c"
        } else {
            color += 1;
            AGENT_COLORS[(color - 1) % AGENT_COLORS.len()]
        };
        polyline(w, points((0..=T_H).map(|t| (a.x[t], a.y[t]))), fill, 0.2, r#" opacity="0.6""#)?;
        polyline(
            w,
            points((T_H..a.len()).map(|t| (a.x[t], a.y[t]))),
            "black",
            0.15,
            r#" stroke-dasharray="0.6 0.4""#,
        )?;
        let s = a.state(T_H);
        let (len, wid) = match a.kind {
            AgentKind::Pedestrian => (0.6, 0.6),
            _ => (a.length, a.width),
        };
        writeln!(
            w,
            r#"<rect x="{:.2}" y="{:.2}" width="{len:.2}" height="{wid:.2}" fill="{fill}" stroke="black" stroke-width="0.1" transform="translate({:.2},{:.2}) rotate({:.2})"/>"#,
            -len / 2.0,
            -wid / 2.0,
            s.x,
            0.0 - s.y,
            -s.heading.to_degrees()
        )?;
    }
    writeln!(w, "</g>")?;

    writeln!(w, r#"<g id="predictions">"#)?;
    if let Some(f) = &layers.futures {
        for m in 0..f.num_modes() {
            let opacity = f.mode_probs.get(m).copied().unwrap_or(0.0).clamp(0.15, 1.0);
            for a in 0..f.num_agents() {
                let steps = f.modes[m][a].len();
                polyline(
                    w,
                    points((0..steps).map(|t| f.mean(m, a, t)).map(|p| (p.x, p.y))),
                    "#7b3294",
                    0.2,
                    &format!(r#" opacity="{opacity:.2}""#),
                )?;
            }
        }
    }
    writeln!(w, "</g>")?;
    writeln!(w, "</svg>")
}
