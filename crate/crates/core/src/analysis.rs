//! Hyperbolic-radius interpretability: per-step traces of the embedding
//! radius against the robot's attention to humans, their correlation, and
//! trajectory rendering.

use std::fmt;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::crowdsim::{rollout, Command, Rollout, ScenarioConfig, Vec2};
use crate::error::{Error, Result};
use crate::planner::{greedy, HyperPlanner};

/// Fewest pooled points a correlation report accepts.
pub const MIN_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusTracePoint {
    pub t: usize,
    /// Norm of the Poincaré embedding, in `[0, 1)`.
    pub radius: f64,
    /// `1 - α_rr`, the robot's attention mass on the humans.
    pub attention_to_others: f64,
}

/// A greedy planner episode with the quantities read at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedEpisode {
    pub rollout: Rollout,
    pub points: Vec<RadiusTracePoint>,
    /// Per step, the robot's attention to each human.
    pub human_attention: Vec<Vec<f64>>,
}

impl TracedEpisode {
    /// Attention to each human averaged over the episode.
    pub fn mean_human_attention(&self) -> Vec<f64> {
        let n = self.human_attention.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; n];
        for step in &self.human_attention {
            for (a, v) in acc.iter_mut().zip(step) {
                *a += v;
            }
        }
        let steps = self.human_attention.len().max(1) as f64;
        acc.iter().map(|a| a / steps).collect()
    }
}

pub fn trace_episode(planner: &HyperPlanner, scenario: &ScenarioConfig, seed: u64) -> Result<TracedEpisode> {
    let mut points = Vec::new();
    let mut human_attention = Vec::new();
    let rollout = rollout(scenario, seed, |obs| {
        let out = planner.q_values(obs)?;
        points.push(RadiusTracePoint {
            t: points.len(),
            radius: out.embedding.norm(),
            attention_to_others: out.attention_to_others(),
        });
        human_attention.push(out.attention.row(0).iter().skip(1).copied().collect());
        Ok(Command::Discrete(greedy(&out.q)))
    })?;
    Ok(TracedEpisode { rollout, points, human_attention })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Value(f64),
    /// One of the series has zero variance.
    Degenerate,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Value(r) => Some(r),
            Correlation::Degenerate => None,
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Correlation::Value(r) => write!(f, "{r:.4}"),
            Correlation::Degenerate => f.write_str("degenerate (zero variance)"),
        }
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::Analysis("correlation of an empty series".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Ok(Correlation::Degenerate);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation::Degenerate);
    }
    Ok(Correlation::Value((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Points pooled per step across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusReport {
    pub episodes: usize,
    /// `(episode, point)` pairs.
    pub points: Vec<(usize, RadiusTracePoint)>,
    pub correlation: Correlation,
}

impl RadiusReport {
    pub fn from_points(episodes: usize, points: Vec<(usize, RadiusTracePoint)>) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::Analysis(format!("{} points pooled, at least {MIN_POINTS} needed", points.len())));
        }
        let xs: Vec<f64> = points.iter().map(|(_, p)| p.radius).collect();
        let ys: Vec<f64> = points.iter().map(|(_, p)| p.attention_to_others).collect();
        let correlation = pearson(&xs, &ys)?;
        Ok(Self { episodes, points, correlation })
    }

    pub fn write_scatter_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "episode,t,radius,attention_to_others")?;
        for (e, p) in &self.points {
            writeln!(w, "{e},{},{},{}", p.t, p.radius, p.attention_to_others)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "pooling: per-step\nepisodes: {}\npoints: {}\npearson_r: {}\n",
            self.episodes,
            self.points.len(),
            self.correlation
        )
    }
}

/// Greedy rollouts of `episodes` seeds starting at `seed`.
pub fn radius_analysis(planner: &HyperPlanner, scenario: &ScenarioConfig, episodes: usize, seed: u64) -> Result<RadiusReport> {
    let mut points = Vec::new();
    for e in 0..episodes {
        let ep = trace_episode(planner, scenario, seed.wrapping_add(e as u64))?;
        points.extend(ep.points.into_iter().map(|p| (e, p)));
    }
    RadiusReport::from_points(episodes, points)
}

pub fn write_timeline_csv<W: Write>(points: &[RadiusTracePoint], mut w: W) -> Result<()> {
    writeln!(w, "t,radius,attention_to_others")?;
    for p in points {
        writeln!(w, "{},{},{}", p.t, p.radius, p.attention_to_others)?;
    }
    Ok(())
}

const COLD: [f64; 3] = [49.0, 54.0, 149.0];
const HOT: [f64; 3] = [215.0, 48.0, 39.0];
const NEUTRAL: &str = "#888888";

/// Linear blue-to-red colour for `x` in `[0, 1]`.
pub fn heat_color(x: f64) -> String {
    let x = x.clamp(0.0, 1.0);
    let c: Vec<u8> = COLD.iter().zip(HOT).map(|(a, b)| (a + (b - a) * x).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Colour per human, the most attended at the hot end.
pub fn attention_colors(attention: &[f64]) -> Vec<String> {
    let max = attention.iter().copied().fold(0.0, f64::max);
    attention
        .iter()
        .map(|a| if max > 0.0 { heat_color(a / max) } else { heat_color(0.0) })
        .collect()
}

const PX_PER_M: f64 = 50.0;

/// Robot and human trajectories as one SVG, a path per agent. Humans are
/// coloured by `attention` when given.
pub fn render_svg(rollout: &Rollout, attention: Option<&[f64]>) -> String {
    let robot = rollout.robot_path();
    let n = rollout.steps.first().map_or(0, |s| s.observation.humans.len());
    let humans: Vec<Vec<Vec2>> = (0..n)
        .map(|i| {
            let mut p: Vec<Vec2> = rollout.steps.iter().map(|s| s.observation.humans[i].position).collect();
            if let Some(last) = rollout.steps.last() {
                p.push(last.next.humans[i].position);
            }
            p
        })
        .collect();
    let goal = rollout.steps.first().map(|s| s.observation.robot.goal);

    let mut all: Vec<Vec2> = robot.iter().chain(humans.iter().flatten()).copied().collect();
    all.extend(goal);
    let (mut lo, mut hi) = (Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0));
    for p in &all {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = 1.0;
    let (w, h) = ((hi.x - lo.x + 2.0 * pad) * PX_PER_M, (hi.y - lo.y + 2.0 * pad) * PX_PER_M);
    let to_px = |p: Vec2| ((p.x - lo.x + pad) * PX_PER_M, (hi.y - p.y + pad) * PX_PER_M);
    let path = |pts: &[Vec2]| {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = to_px(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        d.trim_end().to_string()
    };
    let colors = attention.map(attention_colors);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(g) = goal {
        let (x, y) = to_px(g);
        let _ = writeln!(s, r#"<circle class="goal" cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="green" stroke-width="2"/>"#);
    }
    for (i, pts) in humans.iter().enumerate() {
        let color = colors.as_ref().map_or(NEUTRAL, |c| c[i].as_str());
        let _ = writeln!(s, r#"<path class="human" id="h{i}" d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path(pts));
        if let Some(last) = pts.last() {
            let (x, y) = to_px(*last);
            let r = rollout.steps[0].observation.humans[i].radius * PX_PER_M;
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{color}" fill-opacity="0.4"/>"#);
        }
    }
    let _ = writeln!(s, r#"<path class="robot" id="robot" d="{}" fill="none" stroke="black" stroke-width="3"/>"#, path(&robot));
    if let Some(last) = robot.last() {
        let (x, y) = to_px(*last);
        let r = rollout.steps[0].observation.robot.radius * PX_PER_M;
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="gold" stroke="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}
