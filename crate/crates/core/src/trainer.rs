//! Replay, double dueling TD learning with curiosity, evaluation and
//! checkpointing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::optim::{AdamConfig, RiemannianAdam};
use crate::autodiff::{Mat, ParamStore, Tape};
use crate::config::ExperimentConfig;
use crate::crowdsim::{Command, CrowdEnv, Observation, OrcaRobot, OutcomeKind, ScenarioConfig, NUM_ACTIONS};
use crate::curiosity::CuriosityNets;
use crate::error::{Error, Result};
use crate::planner::{greedy, HyperPlanner, SelectMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Extrinsic reward.
    pub reward: f64,
    pub done: bool,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity FIFO of transitions with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::EmptyBatch);
        }
        let n = self.items.len();
        Ok((0..batch).map(|_| self.rng.gen_range(0..n)).collect())
    }

    pub fn sample(&mut self, batch: usize) -> Result<Vec<Transition>> {
        let idx = self.sample_indices(batch)?;
        Ok(idx.into_iter().map(|i| self.items[i].clone()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub episodes: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Seed of the first evaluation episode; evaluations reuse the same
    /// episodes so rows are comparable.
    pub eval_seed: u64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Train steps between target network copies.
    pub target_sync: usize,
    /// Transitions collected before the first train step.
    pub warmup: usize,
    pub huber_delta: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            eval_interval: 500,
            eval_episodes: 100,
            eval_seed: 1 << 40,
            gamma: 0.9,
            batch_size: 128,
            buffer_capacity: 100_000,
            target_sync: 1000,
            warmup: 2000,
            huber_delta: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("training.gamma must lie in (0, 1), got {}", self.gamma)));
        }
        let positive = [
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("target_sync", self.target_sync),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("training.{name} must be positive")));
            }
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config("training.batch_size exceeds training.buffer_capacity".into()));
        }
        if !(self.adam.lr > 0.0) || !(self.huber_delta > 0.0) {
            return Err(Error::Config("training.adam.lr and training.huber_delta must be positive".into()));
        }
        Ok(())
    }
}

/// Double-Q targets: the online network picks the next action, the target
/// network scores it.
pub fn td_target(rewards: &[f64], dones: &[bool], gamma: f64, q_online_next: &Mat, q_target_next: &Mat) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .enumerate()
        .map(|(i, (&r, &done))| {
            if done {
                r
            } else {
                let row = q_online_next.row(i);
                let a = greedy(row.as_slice().expect("contiguous row"));
                r + gamma * q_target_next[[i, a]]
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub td_loss: f64,
    pub curiosity_loss: f64,
    pub mean_intrinsic: f64,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> Mat {
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((flat.len() / width, width), flat).expect("equal-length rows")
}

/// Online planner, its target copy, curiosity nets and their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub planner: HyperPlanner,
    pub target: ParamStore,
    pub curiosity: CuriosityNets,
    pub n_humans: usize,
    planner_opt: RiemannianAdam,
    curiosity_opt: RiemannianAdam,
    train_steps: u64,
    target_sync: u64,
    gamma: f64,
    huber_delta: f64,
    lambda: f64,
}

impl Agent {
    pub fn new(exp: &ExperimentConfig) -> Result<Self> {
        exp.validate()?;
        let planner = HyperPlanner::new(exp.policy.clone())?;
        let n_humans = exp.scenario.n_humans;
        let curiosity = CuriosityNets::new(exp.curiosity.clone(), Observation::flat_len(n_humans))?;
        let t = &exp.training;
        Ok(Self {
            target: planner.store.clone(),
            planner_opt: RiemannianAdam::new(&planner.store, t.adam),
            curiosity_opt: RiemannianAdam::new(&curiosity.store, t.adam),
            planner,
            curiosity,
            n_humans,
            train_steps: 0,
            target_sync: t.target_sync as u64,
            gamma: t.gamma,
            huber_delta: t.huber_delta,
            lambda: exp.curiosity.lambda,
        })
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Copies online values into the target network.
    pub fn sync_target(&mut self) {
        self.target.copy_values_from(&self.planner.store);
    }

    /// Q-values of the target network, `B × 81`.
    pub fn target_q(&self, states: &Mat) -> Result<Mat> {
        let mut tape = Tape::new();
        let f = self.planner.net.forward(&mut tape, &self.target, states, self.n_humans)?;
        Ok(tape.value(f.q).clone())
    }

    /// One optimizer step on `Huber TD + λ · curiosity`.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let width = Observation::flat_len(self.n_humans);
        let states = stack(batch.iter().map(|t| t.state.clone()), width);
        let next = stack(batch.iter().map(|t| t.next_state.clone()), width);
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();

        let mut tape = Tape::new();
        let cur = self.curiosity.loss(&mut tape, &states, &actions, &next)?;
        let rewards: Vec<f64> = batch.iter().zip(&cur.intrinsic).map(|(t, ri)| t.reward + ri).collect();
        let q_online_next = self.planner.q_batch(&next, self.n_humans)?;
        let q_target_next = self.target_q(&next)?;
        let y = td_target(&rewards, &dones, self.gamma, &q_online_next, &q_target_next);

        let f = self.planner.net.forward(&mut tape, &self.planner.store, &states, self.n_humans)?;
        let pred = tape.pick_cols(f.q, &actions)?;
        let target = Array2::from_shape_vec((y.len(), 1), y).expect("column");
        let h = tape.huber(pred, target, self.huber_delta)?;
        let td = tape.mean(h);
        let train_curiosity = self.lambda > 0.0;
        let total = if train_curiosity {
            let c = tape.scale(cur.loss, self.lambda);
            tape.add(td, c)?
        } else {
            td
        };
        let stats = StepStats {
            td_loss: tape.scalar(td),
            curiosity_loss: tape.scalar(cur.loss),
            mean_intrinsic: cur.intrinsic.iter().sum::<f64>() / cur.intrinsic.len() as f64,
        };
        if !tape.scalar(total).is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at step {} (td {}, curiosity {})",
                self.train_steps, stats.td_loss, stats.curiosity_loss
            )));
        }
        self.planner.store.zero_grad();
        self.curiosity.store.zero_grad();
        tape.backward(total, &mut [&mut self.planner.store, &mut self.curiosity.store])?;
        self.planner_opt.step(&mut self.planner.store)?;
        if train_curiosity {
            self.curiosity_opt.step(&mut self.curiosity.store)?;
        }
        self.train_steps += 1;
        if self.train_steps % self.target_sync == 0 {
            self.sync_target();
        }
        Ok(stats)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let p = &self.planner.net.config;
        let c = &self.curiosity.config;
        let mut ck = Checkpoint::new(p.embed_dim);
        let sizes = [
            ("phi_robot", vec![crate::crowdsim::RobotState::DIM, p.phi_hidden, p.gat_dim]),
            ("phi_human", vec![crate::crowdsim::HumanState::DIM, p.phi_hidden, p.gat_dim]),
            ("gat", vec![p.gat_dim, p.gat_dim, p.gat_dim]),
            ("trunk", vec![p.gat_dim, p.embed_dim]),
            ("value", vec![p.embed_dim, p.head_hidden(), 1]),
            ("advantage", vec![p.embed_dim, p.head_hidden(), NUM_ACTIONS]),
            ("curiosity_phi", vec![self.curiosity.input_dim, c.hidden, c.embed_dim]),
            ("curiosity_forward", vec![c.embed_dim + NUM_ACTIONS, c.hidden, c.embed_dim]),
            ("curiosity_inverse", vec![2 * c.embed_dim, c.hidden, NUM_ACTIONS]),
        ];
        for (k, v) in sizes {
            ck.header.layer_sizes.insert(k.to_string(), v);
        }
        ck.add_store("planner", &self.planner.store);
        ck.add_store("curiosity", &self.curiosity.store);
        ck
    }
}

/// Aggregate evaluation result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    /// Fraction in `[0, 1]`.
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean over successful episodes; `None` without successes.
    pub nav_time: Option<f64>,
    /// Mean discounted extrinsic return.
    pub avg_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub outcome: OutcomeKind,
    pub nav_time: f64,
    pub discounted_return: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: EvalMetrics,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "episode,seed,outcome,nav_time,discounted_return,steps")?;
        for (i, e) in self.episodes.iter().enumerate() {
            let outcome = match e.outcome {
                OutcomeKind::Success => "success",
                OutcomeKind::Collision => "collision",
                OutcomeKind::Timeout => "timeout",
            };
            writeln!(w, "{i},{},{outcome},{},{},{}", e.seed, e.nav_time, e.discounted_return, e.steps)?;
        }
        Ok(())
    }
}

/// Runs `n` episodes with seeds `seed, seed+1, ..`; `make_policy` builds a
/// fresh policy per episode from its seed.
pub fn evaluate_with<F, P>(scenario: &ScenarioConfig, n: usize, seed: u64, gamma: f64, mut make_policy: F) -> Result<EvalReport>
where
    F: FnMut(u64) -> P,
    P: FnMut(&Observation) -> Result<Command>,
{
    if n == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut env = CrowdEnv::new(scenario.clone())?;
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let s = seed.wrapping_add(i);
        let mut policy = make_policy(s);
        let mut obs = env.reset_with_seed(s);
        let (mut ret, mut discount, mut steps) = (0.0, 1.0, 0);
        let outcome = loop {
            let r = env.step(policy(&obs)?)?;
            ret += discount * r.reward;
            discount *= gamma;
            steps += 1;
            obs = r.observation;
            if let Some(o) = r.outcome {
                break o;
            }
        };
        episodes.push(EpisodeRecord { seed: s, outcome: outcome.kind, nav_time: outcome.nav_time, discounted_return: ret, steps });
    }
    let count = |k| episodes.iter().filter(|e| e.outcome == k).count() as f64 / n as f64;
    let success: Vec<f64> = episodes.iter().filter(|e| e.outcome == OutcomeKind::Success).map(|e| e.nav_time).collect();
    let metrics = EvalMetrics {
        episodes: n,
        success_rate: count(OutcomeKind::Success),
        collision_rate: count(OutcomeKind::Collision),
        timeout_rate: count(OutcomeKind::Timeout),
        nav_time: (!success.is_empty()).then(|| success.iter().sum::<f64>() / success.len() as f64),
        avg_return: episodes.iter().map(|e| e.discounted_return).sum::<f64>() / n as f64,
    };
    Ok(EvalReport { metrics, episodes })
}

pub fn evaluate_planner(planner: &HyperPlanner, scenario: &ScenarioConfig, n: usize, seed: u64, gamma: f64) -> Result<EvalReport> {
    evaluate_with(scenario, n, seed, gamma, |_| planner.greedy_policy())
}

pub fn evaluate_orca(scenario: &ScenarioConfig, n: usize, seed: u64, gamma: f64) -> Result<EvalReport> {
    let orca = OrcaRobot::new(scenario);
    evaluate_with(scenario, n, seed, gamma, |_| move |o: &Observation| orca.command(o))
}

/// Uniformly random discrete actions, seeded per episode.
pub fn evaluate_random(scenario: &ScenarioConfig, n: usize, seed: u64, gamma: f64) -> Result<EvalReport> {
    evaluate_with(scenario, n, seed, gamma, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5eed);
        move |_: &Observation| Ok(Command::Discrete(rng.gen_range(0..NUM_ACTIONS)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub eval: EvalMetrics,
    /// Mean intrinsic reward over train batches since the previous row.
    pub mean_intrinsic: f64,
    pub epsilon: f64,
}

pub const METRICS_HEADER: &str = "episode,eval_success_rate,eval_nav_time,eval_avg_return,mean_intrinsic_reward,epsilon";

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let nav = r.eval.nav_time.map_or(String::from("nan"), |t| t.to_string());
        writeln!(w, "{},{},{},{},{},{}", r.episode, r.eval.success_rate, nav, r.eval.avg_return, r.mean_intrinsic, r.epsilon)?;
    }
    Ok(())
}

/// Written next to each checkpoint so it can be reloaded and validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub experiment: ExperimentConfig,
    pub n_humans: usize,
    pub input_dim: usize,
    pub episode: usize,
    pub eval: Option<EvalMetrics>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

pub fn save_agent(agent: &Agent, exp: &ExperimentConfig, episode: usize, eval: Option<EvalMetrics>, path: &Path) -> Result<()> {
    agent.checkpoint().save(path)?;
    let side = Sidecar { experiment: exp.clone(), n_humans: agent.n_humans, input_dim: agent.curiosity.input_dim, episode, eval };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side).map_err(|e| Error::Checkpoint(e.to_string()))?)?;
    Ok(())
}

/// Rebuilds the agent saved at `path` from the checkpoint and its sidecar.
pub fn load_agent(path: &Path) -> Result<(Agent, Sidecar)> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("sidecar: {e}")))?;
    let ck = Checkpoint::load(path)?;
    if ck.header.embed_dim != side.experiment.policy.embed_dim {
        return Err(Error::Checkpoint(format!(
            "checkpoint embed_dim {} does not match sidecar embed_dim {}",
            ck.header.embed_dim, side.experiment.policy.embed_dim
        )));
    }
    let mut agent = Agent::new(&side.experiment)?;
    ck.load_store("planner", &mut agent.planner.store)?;
    ck.load_store("curiosity", &mut agent.curiosity.store)?;
    agent.sync_target();
    Ok((agent, side))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub rows: Vec<MetricsRow>,
    /// Episode and metrics of the best evaluation.
    pub best: Option<(usize, EvalMetrics)>,
    pub train_steps: u64,
}

fn better(a: &EvalMetrics, b: &EvalMetrics) -> bool {
    a.success_rate > b.success_rate || (a.success_rate == b.success_rate && a.avg_return > b.avg_return)
}

/// Trains per `exp`. With `out` set, writes `metrics.csv`, `best.ckpt` and
/// `final.ckpt` (each with a JSON sidecar) there.
pub fn run_training(exp: &ExperimentConfig, out: Option<&Path>) -> Result<TrainingReport> {
    let mut agent = Agent::new(exp)?;
    let t = &exp.training;
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let mut buffer = ReplayBuffer::new(t.buffer_capacity, t.seed.wrapping_add(1));
    let mut env = CrowdEnv::new(exp.scenario.clone())?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let warm = t.warmup.max(t.batch_size);
    let mut rows = Vec::new();
    let mut best: Option<(usize, EvalMetrics)> = None;
    let (mut intrinsic_sum, mut intrinsic_n) = (0.0, 0usize);

    for episode in 0..t.episodes {
        let eps = exp.policy.epsilon(episode);
        let mut obs = env.reset_with_seed(rng.gen());
        loop {
            let a = agent.planner.select_action(&obs, SelectMode::EpsilonGreedy(eps), &mut rng)?;
            let r = env.step(Command::Discrete(a))?;
            buffer.push(Transition { state: obs.flatten(), action: a, reward: r.reward, done: r.done, next_state: r.observation.flatten() });
            obs = r.observation;
            if buffer.len() >= warm {
                let batch = buffer.sample(t.batch_size)?;
                let s = agent.train_step(&batch)?;
                intrinsic_sum += s.mean_intrinsic;
                intrinsic_n += 1;
            }
            if r.done {
                break;
            }
        }
        let finished = episode + 1;
        if finished % t.eval_interval == 0 || finished == t.episodes {
            let report = evaluate_planner(&agent.planner, &exp.scenario, t.eval_episodes, t.eval_seed, t.gamma)?;
            let m = report.metrics;
            info!(
                "episode {finished}: success {:.3}, return {:.4}, train steps {}",
                m.success_rate,
                m.avg_return,
                agent.train_steps()
            );
            rows.push(MetricsRow {
                episode: finished,
                eval: m,
                mean_intrinsic: if intrinsic_n > 0 { intrinsic_sum / intrinsic_n as f64 } else { 0.0 },
                epsilon: eps,
            });
            intrinsic_sum = 0.0;
            intrinsic_n = 0;
            if best.as_ref().map_or(true, |(_, b)| better(&m, b)) {
                best = Some((finished, m));
                if let Some(dir) = out {
                    save_agent(&agent, exp, finished, Some(m), &dir.join("best.ckpt"))?;
                }
            }
            if let Some(dir) = out {
                write_metrics_csv(&rows, fs::File::create(dir.join("metrics.csv"))?)?;
            }
        }
    }
    if let Some(dir) = out {
        if t.episodes > 0 {
            save_agent(&agent, exp, t.episodes, rows.last().map(|r| r.eval), &dir.join("final.ckpt"))?;
        } else {
            write_metrics_csv(&rows, fs::File::create(dir.join("metrics.csv"))?)?;
        }
    }
    Ok(TrainingReport { rows, best, train_steps: agent.train_steps() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn transition(i: usize) -> Transition {
        Transition { state: vec![i as f64], action: i % NUM_ACTIONS, reward: 0.0, done: false, next_state: vec![0.0] }
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut b = ReplayBuffer::new(3, 0);
        for i in 0..5 {
            b.push(transition(i));
        }
        assert_eq!(b.len(), 3);
        let mut seen: Vec<f64> = (0..3).map(|i| b.get(i).state[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![2.0, 3.0, 4.0]);
        assert!(matches!(b.sample(4), Err(Error::EmptyBatch)));
    }

    #[test]
    fn toy_double_q_target() {
        // Online prefers action 1 in row 0, action 0 in row 1.
        let online = array![[0.0, 1.0], [2.0, -1.0]];
        let target = array![[10.0, 20.0], [30.0, 40.0]];
        let y = td_target(&[1.0, -1.0], &[false, false], 0.5, &online, &target);
        assert_eq!(y, vec![1.0 + 0.5 * 20.0, -1.0 + 0.5 * 30.0]);
        let y = td_target(&[1.0, -1.0], &[true, false], 0.5, &online, &target);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn zero_episode_evaluation_is_rejected() {
        assert!(evaluate_orca(&ScenarioConfig::simple(), 0, 0, 0.9).is_err());
    }

    #[test]
    fn straight_policy_in_empty_arena_succeeds() {
        let cfg = ScenarioConfig::simple().with_humans(0);
        let r = evaluate_with(&cfg, 1, 0, 0.9, |_| crate::crowdsim::rollout::straight_to_goal(0.25)).unwrap();
        assert_eq!(r.metrics.success_rate, 1.0);
        assert_eq!(r.metrics.nav_time, Some(7.75));
    }
}
