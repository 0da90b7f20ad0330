use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypnav::analysis::{radius_analysis, render_svg, trace_episode, write_timeline_csv};
use hypnav::config::ExperimentConfig;
use hypnav::crowdsim::{rollout, OrcaRobot, Rollout, ScenarioConfig, ScenarioKind};
use hypnav::planner::HyperPlanner;
use hypnav::trainer::{evaluate_orca, evaluate_planner, evaluate_random, load_agent, run_training, EvalMetrics, Sidecar};
use hypnav::Error;

#[derive(Parser)]
#[command(name = "hypnav", version, about = "Hyperbolic crowd navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a planner with curiosity and write metrics and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the `orca` / `random` baselines).
    Eval(EvalArgs),
    /// Run one episode and render its trajectories.
    Rollout(RolloutArgs),
    /// Correlate embedding radius with attention to humans.
    RadiusAnalysis(RadiusArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training seed; the planner and curiosity
    /// initialisations use `seed` and `seed + 1`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `training.episodes`.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct PolicyArgs {
    /// Checkpoint path, or `orca` / `random`.
    #[arg(long)]
    checkpoint: String,
    /// `simple`, `complex` (circle) or `complex-square`.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Experiment TOML providing the scenario section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct RadiusArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", path.display())));
    }
    Ok(ExperimentConfig::load(path)?)
}

enum Policy {
    Orca,
    Random,
    Planner(Box<HyperPlanner>, Box<Sidecar>),
}

struct Setup {
    policy: Policy,
    scenario: ScenarioConfig,
    gamma: f64,
}

fn setup(args: &PolicyArgs) -> Result<Setup, Failure> {
    let config = args.config.as_deref().map(load_config).transpose()?;
    let policy = match args.checkpoint.as_str() {
        "orca" => Policy::Orca,
        "random" => Policy::Random,
        path => {
            let path = Path::new(path);
            if !path.is_file() {
                return Err(Failure::Usage(format!("checkpoint not found: {}", path.display())));
            }
            let (agent, side) = load_agent(path)?;
            if let Some(cfg) = &config {
                let (ck, cf) = (side.experiment.policy.embed_dim, cfg.policy.embed_dim);
                if ck != cf {
                    return Err(Failure::Usage(format!(
                        "checkpoint embed_dim {ck} does not match config embed_dim {cf}"
                    )));
                }
            }
            Policy::Planner(Box::new(agent.planner), Box::new(side))
        }
    };
    let base = match (&config, &policy) {
        (Some(c), _) => c.clone(),
        (None, Policy::Planner(_, side)) => side.experiment.clone(),
        (None, _) => ExperimentConfig::default(),
    };
    let scenario = match args.scenario {
        Some(kind) if kind != base.scenario.kind => ScenarioConfig::new(kind),
        _ => base.scenario.clone(),
    };
    scenario.validate()?;
    Ok(Setup { policy, scenario, gamma: base.training.gamma })
}

fn metrics_line(m: &EvalMetrics) -> String {
    let nav = m.nav_time.map_or("n/a".to_string(), |t| format!("{t:.2}"));
    format!(
        "success_rate {:.4} collision_rate {:.4} timeout_rate {:.4} nav_time {nav} avg_return {:.4}",
        m.success_rate, m.collision_rate, m.timeout_rate, m.avg_return
    )
}

fn train(args: TrainArgs) -> CmdResult {
    let mut exp = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        exp = exp.with_seed(seed);
    }
    if let Some(n) = args.episodes {
        exp.training.episodes = n;
    }
    if let Some(out) = args.out {
        exp.output_dir = out;
    }
    exp.validate()?;
    let report = run_training(&exp, Some(&exp.output_dir))?;
    match report.rows.last() {
        Some(r) => println!("final eval (episode {}): {}", r.episode, metrics_line(&r.eval)),
        None => println!("no evaluation rows (0 episodes)"),
    }
    if let Some((ep, m)) = report.best {
        println!("best eval (episode {ep}): {}", metrics_line(&m));
    }
    println!("wrote {}", exp.output_dir.display());
    Ok(())
}

fn eval(args: EvalArgs) -> CmdResult {
    let s = setup(&args.policy)?;
    let (n, seed) = (args.episodes, args.policy.seed);
    let report = match &s.policy {
        Policy::Orca => evaluate_orca(&s.scenario, n, seed, s.gamma)?,
        Policy::Random => evaluate_random(&s.scenario, n, seed, s.gamma)?,
        Policy::Planner(p, _) => evaluate_planner(p, &s.scenario, n, seed, s.gamma)?,
    };
    fs::create_dir_all(&args.policy.out)?;
    let path = args.policy.out.join("eval_episodes.csv");
    report.write_csv(fs::File::create(&path)?)?;
    println!("{}", metrics_line(&report.metrics));
    println!("wrote {}", path.display());
    Ok(())
}

fn run_rollout(args: RolloutArgs) -> CmdResult {
    let s = setup(&args.policy)?;
    let (seed, out) = (args.policy.seed, &args.policy.out);
    fs::create_dir_all(out)?;
    let (ro, attention): (Rollout, Option<Vec<f64>>) = match &s.policy {
        Policy::Planner(p, _) => {
            let ep = trace_episode(p, &s.scenario, seed)?;
            write_timeline_csv(&ep.points, fs::File::create(out.join("radius_timeline.csv"))?)?;
            let att = ep.mean_human_attention();
            (ep.rollout, Some(att))
        }
        Policy::Orca => {
            let orca = OrcaRobot::new(&s.scenario);
            (rollout(&s.scenario, seed, |o| orca.command(o))?, None)
        }
        Policy::Random => {
            return Err(Failure::Usage("rollout needs a checkpoint or `orca`".into()));
        }
    };
    ro.write_csv(fs::File::create(out.join("trace.csv"))?)?;
    fs::write(out.join("trajectory.svg"), render_svg(&ro, attention.as_deref()))?;
    println!(
        "outcome {:?} after {} steps, nav_time {:.2}, return {:.4}",
        ro.outcome.kind,
        ro.steps.len(),
        ro.outcome.nav_time,
        ro.outcome.cumulative_return
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn radius(args: RadiusArgs) -> CmdResult {
    let s = setup(&args.policy)?;
    let Policy::Planner(p, _) = &s.policy else {
        return Err(Failure::Usage("radius analysis needs a trained checkpoint".into()));
    };
    let report = radius_analysis(p, &s.scenario, args.episodes, args.policy.seed)?;
    let out = &args.policy.out;
    fs::create_dir_all(out)?;
    report.write_scatter_csv(fs::File::create(out.join("radius_scatter.csv"))?)?;
    fs::write(out.join("radius_report.txt"), report.summary())?;
    print!("{}", report.summary());
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Rollout(a) => run_rollout(a),
        Command::RadiusAnalysis(a) => radius(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
