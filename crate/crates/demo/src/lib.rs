//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string.

use hypnav::analysis::render_svg;
use hypnav::crowdsim::{action_space, rollout, OrcaRobot, OutcomeKind, ScenarioConfig};
use hypnav::hypgeom::{exp_map_origin, hyperbolic_radius, log_map_origin, mobius_add, poincare_distance, project_to_ball, PoincarePoint, TangentVector};
use hypnav::planner::{HyperPlanner, PolicyConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct DiskPair {
    a: [f64; 2],
    b: [f64; 2],
    distance: f64,
    mobius_sum: [f64; 2],
    radius_a: f64,
    radius_b: f64,
    geodesic: Vec<[f64; 2]>,
}

fn pair(p: &PoincarePoint) -> [f64; 2] {
    [p.coords()[0], p.coords()[1]]
}

fn disk(ax: f64, ay: f64, bx: f64, by: f64, samples: usize) -> Result<DiskPair, String> {
    let a = project_to_ball(&[ax, ay]).map_err(|e| e.to_string())?;
    let b = project_to_ball(&[bx, by]).map_err(|e| e.to_string())?;
    let err = |e: hypnav::Error| e.to_string();
    let dir = log_map_origin(&mobius_add(&a.neg(), &b).map_err(err)?);
    let samples = samples.max(1);
    let mut geodesic = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let t = i as f64 / samples as f64;
        let step = exp_map_origin(&TangentVector::new(dir.coords().iter().map(|c| c * t).collect()).map_err(err)?);
        geodesic.push(pair(&mobius_add(&a, &step).map_err(err)?));
    }
    Ok(DiskPair {
        a: pair(&a),
        b: pair(&b),
        distance: poincare_distance(&a, &b).map_err(err)?,
        mobius_sum: pair(&mobius_add(&a, &b).map_err(err)?),
        radius_a: hyperbolic_radius(&a),
        radius_b: hyperbolic_radius(&b),
        geodesic,
    })
}

/// Distance, Möbius sum and sampled geodesic between two points of the
/// Poincaré disk. Points outside the disk are pulled onto its edge.
#[wasm_bindgen]
pub fn disk_pair(ax: f64, ay: f64, bx: f64, by: f64, samples: usize) -> Result<String, String> {
    serde_json::to_string(&disk(ax, ay, bx, by, samples)?).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Episode {
    svg: String,
    outcome: &'static str,
    nav_time: f64,
    steps: usize,
    cumulative_return: f64,
}

fn episode(scenario: &str, seed: u64, policy: &str) -> Result<Episode, String> {
    let cfg = ScenarioConfig::new(scenario.parse().map_err(|e: hypnav::Error| e.to_string())?);
    let (ro, attention) = match policy {
        "orca" => {
            let orca = OrcaRobot::new(&cfg);
            (rollout(&cfg, seed, |o| orca.command(o)).map_err(|e| e.to_string())?, None)
        }
        "untrained" => {
            let planner = HyperPlanner::new(PolicyConfig { init_seed: seed, ..Default::default() }).map_err(|e| e.to_string())?;
            let ep = hypnav::analysis::trace_episode(&planner, &cfg, seed).map_err(|e| e.to_string())?;
            let att = ep.mean_human_attention();
            (ep.rollout, Some(att))
        }
        other => return Err(format!("unknown policy `{other}`")),
    };
    Ok(Episode {
        svg: render_svg(&ro, attention.as_deref()),
        outcome: match ro.outcome.kind {
            OutcomeKind::Success => "success",
            OutcomeKind::Collision => "collision",
            OutcomeKind::Timeout => "timeout",
        },
        nav_time: ro.outcome.nav_time,
        steps: ro.steps.len(),
        cumulative_return: ro.outcome.cumulative_return,
    })
}

/// One episode rendered as SVG. `policy` is `orca` or `untrained` (a
/// freshly initialised planner, humans coloured by its attention).
#[wasm_bindgen]
pub fn crowd_episode(scenario: &str, seed: u32, policy: &str) -> Result<String, String> {
    serde_json::to_string(&episode(scenario, seed as u64, policy)?).map_err(|e| e.to_string())
}

/// The 81 discrete actions as `[vx, vy]` velocities.
#[wasm_bindgen]
pub fn action_velocities(max_speed: f64) -> String {
    let v: Vec<[f64; 2]> = action_space(max_speed).iter().map(|a| {
        let v = a.velocity();
        [v.x, v.y]
    }).collect();
    serde_json::to_string(&v).expect("plain floats")
}
