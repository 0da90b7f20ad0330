mod common;

use common::*;

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;

fn run(name: &str, f: impl Fn(u64) -> hypnav::autodiff::gradcheck::GradCheck) {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let r = f(seed);
        assert!(r.checked > 0);
        worst = worst.max(r.max_rel_error);
        assert!(r.max_rel_error <= TOL, "{name} seed {seed}: {r:?}");
    }
    eprintln!("{name}: max relative error {worst:.2e}");
}

#[test]
fn mlp_gradients() {
    run("mlp", gradcheck_mlp);
}

#[test]
fn gat_gradients() {
    run("gat", gradcheck_gat);
}

#[test]
fn hlinear_gradients() {
    run("h-linear", gradcheck_hlinear);
}

#[test]
fn hrelu_gradients() {
    run("hrelu", gradcheck_hrelu);
}

#[test]
fn planner_loss_gradients() {
    run("planner", |s| gradcheck_planner(s, 12));
}

#[test]
fn curiosity_loss_gradients() {
    run("curiosity", |s| gradcheck_curiosity(s, 12));
}
