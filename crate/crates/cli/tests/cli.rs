use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hypnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypnav"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run hypnav")
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_smoke(out: &Path, seed: &str) {
    let o = hypnav(&["train", "--config", s(&smoke_config()), "--seed", seed, "--out", s(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_exits_with_2() {
    let o = hypnav(&["train", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.toml"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[training]\nepisodez = 3\n").unwrap();
    let o = hypnav(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("episodez"));
}

#[test]
fn train_writes_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    train_smoke(dir.path(), "3");
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("episode,eval_success_rate,eval_nav_time,eval_avg_return,mean_intrinsic_reward,epsilon"));
    for f in ["best.ckpt", "best.json", "final.ckpt", "final.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_metrics() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train_smoke(a.path(), "7");
    train_smoke(b.path(), "7");
    let read = |d: &Path| fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(fs::read(a.path().join("final.ckpt")).unwrap(), fs::read(b.path().join("final.ckpt")).unwrap());
}

#[test]
fn eval_orca_writes_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let o = hypnav(&["eval", "--checkpoint", "orca", "--scenario", "simple", "--episodes", "12", "--out", s(dir.path())]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("success_rate"));
    let csv = fs::read_to_string(dir.path().join("eval_episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn eval_of_zero_episodes_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = hypnav(&["eval", "--checkpoint", "orca", "--episodes", "0", "--out", s(dir.path())]);
    assert!(!o.status.success());
}

#[test]
fn checkpoint_commands() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train_smoke(&run, "1");
    let ckpt = run.join("final.ckpt");

    let ev = dir.path().join("eval");
    let o = hypnav(&["eval", "--checkpoint", s(&ckpt), "--episodes", "5", "--out", s(&ev)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(ev.join("eval_episodes.csv")).unwrap().lines().count(), 6);

    let ro = dir.path().join("rollout");
    let o = hypnav(&["rollout", "--checkpoint", s(&ckpt), "--scenario", "complex", "--seed", "4", "--out", s(&ro)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(ro.join("trace.csv")).unwrap().lines().count();
    let timeline = fs::read_to_string(ro.join("radius_timeline.csv")).unwrap().lines().count();
    assert_eq!(trace, timeline);
    let svg = fs::read_to_string(ro.join("trajectory.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 11);

    let ra = dir.path().join("radius");
    let o = hypnav(&["radius-analysis", "--checkpoint", s(&ckpt), "--scenario", "complex", "--episodes", "0", "--out", s(&ra)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 100"));
    let o = hypnav(&["radius-analysis", "--checkpoint", s(&ckpt), "--scenario", "complex", "--episodes", "30", "--out", s(&ra)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pearson_r"));
    assert!(fs::read_to_string(ra.join("radius_report.txt")).unwrap().contains("pooling: per-step"));
}

#[test]
fn embedding_mismatch_names_both_dims() {
    let dir = tempfile::tempdir().unwrap();
    train_smoke(dir.path(), "2");
    let cfg = dir.path().join("wide.toml");
    fs::write(&cfg, "[policy]\nembed_dim = 128\n[curiosity]\nembed_dim = 128\n").unwrap();
    let ckpt = dir.path().join("final.ckpt");
    let o = hypnav(&["eval", "--checkpoint", s(&ckpt), "--config", s(&cfg), "--episodes", "1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("embed_dim 2") && err.contains("embed_dim 128"), "{err}");
}

#[test]
fn orca_rollout_renders_every_agent() {
    let dir = tempfile::tempdir().unwrap();
    let o = hypnav(&["rollout", "--checkpoint", "orca", "--seed", "9", "--out", s(dir.path())]);
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("trajectory.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 6);
    assert!(!dir.path().join("radius_timeline.csv").exists());
}
