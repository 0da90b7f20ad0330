//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use hypnav::autodiff::gradcheck::{check_params, sample_entries, GradCheck};
use hypnav::autodiff::layers::{GatLayer, HLinear, Mlp};
use hypnav::autodiff::{hyp, Mat, ParamKind, ParamStore, Tape};
use hypnav::crowdsim::{Command, CrowdEnv, Observation, ScenarioConfig, NUM_ACTIONS};
use hypnav::curiosity::{CuriosityConfig, CuriosityNets};
use hypnav::planner::{PlannerNet, PolicyConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

/// Rows strictly inside the ball, norms up to `max_norm`.
pub fn ball_points(rows: usize, cols: usize, max_norm: f64, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = uniform(rows, cols, 1.0, rng);
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt().max(1e-12);
        let target = rng.gen_range(0.0..max_norm);
        row *= target / n;
    }
    m
}

/// Observations met along random-action episodes.
pub fn random_observations(cfg: &ScenarioConfig, n: usize, seed: u64) -> Vec<Observation> {
    let mut r = rng(seed);
    let mut env = CrowdEnv::new(cfg.clone()).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut obs = env.reset_with_seed(r.gen());
    while out.len() < n {
        out.push(obs.clone());
        let step = env.step(Command::Discrete(r.gen_range(0..NUM_ACTIONS))).unwrap();
        obs = if step.done { env.reset_with_seed(r.gen()) } else { step.observation };
    }
    out
}

pub fn stack(obs: &[Observation]) -> Mat {
    let width = obs[0].flatten().len();
    let flat: Vec<f64> = obs.iter().flat_map(|o| o.flatten()).collect();
    Array2::from_shape_vec((obs.len(), width), flat).unwrap()
}

/// Weighted sum of all outputs, so every output coordinate matters.
fn weighted_sum(t: &mut Tape, y: hypnav::autodiff::Var, weights: Mat) -> hypnav::Result<hypnav::autodiff::Var> {
    let w = t.constant(weights);
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

pub fn gradcheck_mlp(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", &[4, 6, 3], false, &mut r);
    for p in store.params_mut() {
        p.value = uniform(p.value.nrows(), p.value.ncols(), 0.8, &mut r);
    }
    let x = uniform(5, 4, 1.0, &mut r);
    let w = uniform(5, 3, 1.0, &mut r);
    let entries = sample_entries(&store, usize::MAX, &mut r);
    check_params(&mut store, &entries, |t, s| {
        let xv = t.constant(x.clone());
        let y = mlp.forward(t, s, xv)?;
        weighted_sum(t, y, w.clone())
    })
    .unwrap()
}

pub fn gradcheck_gat(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 3, 4, &mut r);
    let x = uniform(8, 3, 1.0, &mut r);
    let w = uniform(8, 4, 1.0, &mut r);
    let entries = sample_entries(&store, usize::MAX, &mut r);
    check_params(&mut store, &entries, |t, s| {
        let xv = t.constant(x.clone());
        let y = gat.forward(t, s, xv, 4)?;
        weighted_sum(t, y, w.clone())
    })
    .unwrap()
}

pub fn gradcheck_hlinear(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let layer = HLinear::new(&mut store, "h", 3, 2, &mut r);
    let b = ball_points(1, 2, 0.6, &mut r);
    store.get_mut(layer.bias).value = b;
    let x = ball_points(4, 3, 0.8, &mut r);
    let w = uniform(4, 2, 1.0, &mut r);
    let entries = sample_entries(&store, usize::MAX, &mut r);
    check_params(&mut store, &entries, |t, s| {
        let xv = t.constant(x.clone());
        let y = layer.forward(t, s, xv)?;
        weighted_sum(t, y, w.clone())
    })
    .unwrap()
}

/// Gradient of Möbius ReLU with respect to its input.
pub fn gradcheck_hrelu(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let mut x = ball_points(4, 3, 0.9, &mut r);
    // Off the ReLU kink.
    x.mapv_inplace(|v| if v.abs() < 1e-3 { v.signum() * 1e-3 + v } else { v });
    let id = store.add("x", ParamKind::Euclidean, x);
    let w = uniform(4, 3, 1.0, &mut r);
    let entries = sample_entries(&store, usize::MAX, &mut r);
    check_params(&mut store, &entries, |t, s| {
        let x = t.param(s, id);
        let y = hyp::hrelu(t, x)?;
        weighted_sum(t, y, w.clone())
    })
    .unwrap()
}

/// Huber TD loss of the full planner against fixed targets.
pub fn gradcheck_planner(seed: u64, entries_per_seed: usize) -> GradCheck {
    let mut r = rng(seed);
    let cfg = ScenarioConfig::simple();
    let obs = random_observations(&cfg, 4, seed);
    let states = stack(&obs);
    let actions: Vec<usize> = (0..4).map(|_| r.gen_range(0..NUM_ACTIONS)).collect();
    let targets = uniform(4, 1, 1.0, &mut r);
    let mut store = ParamStore::new();
    let net = PlannerNet::new(PolicyConfig { init_seed: seed, ..Default::default() }, &mut store).unwrap();
    let entries = sample_entries(&store, entries_per_seed, &mut r);
    check_params(&mut store, &entries, |t, s| {
        let f = net.forward(t, s, &states, 5)?;
        let q = t.pick_cols(f.q, &actions)?;
        let h = t.huber(q, targets.clone(), 1.0)?;
        Ok(t.mean(h))
    })
    .unwrap()
}

/// Combined forward/inverse curiosity loss.
pub fn gradcheck_curiosity(seed: u64, entries_per_seed: usize) -> GradCheck {
    let mut r = rng(seed);
    let cfg = ScenarioConfig::simple();
    let obs = random_observations(&cfg, 5, seed);
    // Below the saturation of exp_O, away from the projection shell.
    let states = stack(&obs[..4]) * 0.05;
    let next = stack(&obs[1..]) * 0.05;
    let actions: Vec<usize> = (0..4).map(|_| r.gen_range(0..NUM_ACTIONS)).collect();
    let nets = CuriosityNets::new(CuriosityConfig { init_seed: seed, ..Default::default() }, states.ncols()).unwrap();
    let mut store = nets.store.clone();
    let entries = sample_entries(&store, entries_per_seed, &mut r);
    check_params(&mut store, &entries, |t, s| Ok(nets.loss_in(t, s, &states, &actions, &next)?.loss))
    .unwrap()
}
