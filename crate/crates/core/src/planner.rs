//! Graph state encoder and hyperbolic dueling value network.
//!
//! Each agent is embedded by a type-specific MLP, the robot and humans form a
//! complete graph with self-loops that passes through two attention layers,
//! and the robot node's feature is lifted onto the Poincaré ball where the
//! value and advantage heads run as hyperbolic MLPs.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::hyp;
use crate::autodiff::layers::{GatLayer, HMlp, Mlp};
use crate::autodiff::{Mat, ParamStore, Tape, Var};
use crate::crowdsim::{Command, HumanState, Observation, RobotState, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::hypgeom::PoincarePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Dimension of the ball the heads live on.
    pub embed_dim: usize,
    pub phi_hidden: usize,
    pub gat_dim: usize,
    /// Hidden width of the value and advantage heads; the embedding
    /// dimension when unset.
    pub head_hidden: Option<usize>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    /// Seed for weight initialisation.
    pub init_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embed_dim: 2,
            phi_hidden: 128,
            gat_dim: 32,
            head_hidden: None,
            epsilon_start: 0.5,
            epsilon_end: 0.02,
            epsilon_decay_episodes: 4000,
            init_seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn with_embed_dim(mut self, n: usize) -> Self {
        self.embed_dim = n;
        self
    }

    pub fn head_hidden(&self) -> usize {
        self.head_hidden.unwrap_or(self.embed_dim)
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 || episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::Config(format!("policy.embed_dim must be at least 2, got {}", self.embed_dim)));
        }
        if self.phi_hidden == 0 || self.gat_dim == 0 || self.head_hidden() == 0 {
            return Err(Error::Config("policy layer widths must be positive".into()));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("policy.{name} must lie in [0, 1], got {e}")));
            }
        }
        Ok(())
    }
}

/// Layer handles of the planner. The same handles index any store built
/// with the same config, so online and target networks share one layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerNet {
    pub config: PolicyConfig,
    pub phi_robot: Mlp,
    pub phi_human: Mlp,
    pub gat1: GatLayer,
    pub gat2: GatLayer,
    pub trunk: HMlp,
    pub value: HMlp,
    pub advantage: HMlp,
}

/// Tape handles of a batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PlannerForward {
    /// `B × 81`
    pub q: Var,
    /// `B × 1`
    pub v: Var,
    /// `B × 81`
    pub advantages: Var,
    /// `B × n`, on the ball.
    pub embedding: Var,
    /// Second attention layer, `B·(N+1)` rows of `N+1` coefficients.
    pub attention: Var,
}

impl PlannerNet {
    pub fn new(config: PolicyConfig, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (h, d, n, hh) = (config.phi_hidden, config.gat_dim, config.embed_dim, config.head_hidden());
        let phi_robot = Mlp::new(store, "phi_robot", &[RobotState::DIM, h, d], true, &mut rng);
        let phi_human = Mlp::new(store, "phi_human", &[HumanState::DIM, h, d], true, &mut rng);
        let gat1 = GatLayer::new(store, "gat1", d, d, &mut rng);
        let gat2 = GatLayer::new(store, "gat2", d, d, &mut rng);
        let trunk = HMlp::new(store, "trunk", &[d, n], &mut rng);
        let value = HMlp::new(store, "value", &[n, hh, 1], &mut rng);
        let advantage = HMlp::new(store, "advantage", &[n, hh, NUM_ACTIONS], &mut rng);
        Ok(Self { config, phi_robot, phi_human, gat1, gat2, trunk, value, advantage })
    }

    /// Robot-node features after both attention layers (`B × d`) and the
    /// second layer's attention node.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, states: &Mat, n_humans: usize) -> Result<(Var, Var)> {
        let b = states.nrows();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        let width = Observation::flat_len(n_humans);
        if states.ncols() != width {
            return Err(Error::DimensionMismatch { expected: width, found: states.ncols() });
        }
        let robot_in = tape.constant(states.slice(s![.., ..RobotState::DIM]).to_owned());
        let robot = self.phi_robot.forward(tape, store, robot_in)?;
        let group = n_humans + 1;
        let nodes = if n_humans == 0 {
            robot
        } else {
            let humans_raw = states
                .slice(s![.., RobotState::DIM..])
                .to_owned()
                .into_shape_with_order((b * n_humans, HumanState::DIM))
                .map_err(|_| Error::DimensionMismatch { expected: width, found: states.ncols() })?;
            let humans_in = tape.constant(humans_raw);
            let humans = self.phi_human.forward(tape, store, humans_in)?;
            let index: Vec<(usize, usize)> = (0..b)
                .flat_map(|g| std::iter::once((0, g)).chain((0..n_humans).map(move |i| (1, g * n_humans + i))))
                .collect();
            tape.gather_rows(&[robot, humans], &index)?
        };
        let h1 = self.gat1.forward(tape, store, nodes, group)?;
        let h1 = tape.relu(h1);
        let h2 = self.gat2.forward(tape, store, h1, group)?;
        let robot_rows: Vec<usize> = (0..b).map(|g| g * group).collect();
        let out = tape.select_rows(h2, &robot_rows)?;
        Ok((out, h2))
    }

    /// Q-values for a batch of flattened states with `n_humans` humans each.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, states: &Mat, n_humans: usize) -> Result<PlannerForward> {
        let (robot, attention) = self.encode(tape, store, states, n_humans)?;
        let x = hyp::exp0(tape, robot)?;
        let x = self.trunk.forward(tape, store, x)?;
        let embedding = hyp::hrelu(tape, x)?;
        let v_ball = self.value.forward(tape, store, embedding)?;
        let a_ball = self.advantage.forward(tape, store, embedding)?;
        let v = hyp::log0(tape, v_ball)?;
        let advantages = hyp::log0(tape, a_ball)?;
        let mean = tape.mean_cols(advantages);
        let offset = tape.sub(v, mean)?;
        let q = tape.add_col(advantages, offset)?;
        Ok(PlannerForward { q, v, advantages, embedding, attention })
    }
}

/// Forward pass on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct QOutput {
    pub q: Vec<f64>,
    pub v: f64,
    pub advantages: Vec<f64>,
    /// `(N+1) × (N+1)`, robot first.
    pub attention: Mat,
    pub embedding: PoincarePoint,
}

impl QOutput {
    /// One minus the robot's attention to itself.
    pub fn attention_to_others(&self) -> f64 {
        1.0 - self.attention[[0, 0]]
    }
}

/// Argmax with the lowest index winning ties.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectMode {
    Greedy,
    /// Uniform random action with this probability, otherwise greedy.
    EpsilonGreedy(f64),
}

/// `Q = V + A - mean(A)`.
pub fn dueling(v: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| v + a - mean).collect()
}

pub fn select_from_q<R: Rng>(q: &[f64], mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Greedy => greedy(q),
        SelectMode::EpsilonGreedy(eps) => {
            if rng.gen::<f64>() < eps {
                rng.gen_range(0..q.len())
            } else {
                greedy(q)
            }
        }
    }
}

/// Planner network together with its parameters.
#[derive(Debug, Clone)]
pub struct HyperPlanner {
    pub net: PlannerNet,
    pub store: ParamStore,
}

impl HyperPlanner {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = PlannerNet::new(config, &mut store)?;
        Ok(Self { net, store })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.net.config
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn q_values(&self, obs: &Observation) -> Result<QOutput> {
        let flat = obs.flatten();
        let states = Array2::from_shape_vec((1, flat.len()), flat).expect("row vector");
        let mut tape = Tape::new();
        let f = self.net.forward(&mut tape, &self.store, &states, obs.humans.len())?;
        let q = tape.value(f.q).row(0).to_vec();
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("planner Q-values".into()));
        }
        Ok(QOutput {
            q,
            v: tape.value(f.v)[[0, 0]],
            advantages: tape.value(f.advantages).row(0).to_vec(),
            attention: tape.attention(f.attention).cloned().expect("attention node"),
            embedding: PoincarePoint::new(tape.value(f.embedding).row(0).to_vec())?,
        })
    }

    /// Q-values for a batch of flattened states, `B × 81`.
    pub fn q_batch(&self, states: &Mat, n_humans: usize) -> Result<Mat> {
        let mut tape = Tape::new();
        let f = self.net.forward(&mut tape, &self.store, states, n_humans)?;
        Ok(tape.value(f.q).clone())
    }

    pub fn select_action<R: Rng>(&self, obs: &Observation, mode: SelectMode, rng: &mut R) -> Result<usize> {
        // Skip the forward pass when the choice is random anyway.
        if let SelectMode::EpsilonGreedy(eps) = mode {
            if rng.gen::<f64>() < eps {
                return Ok(rng.gen_range(0..NUM_ACTIONS));
            }
        }
        Ok(greedy(&self.q_values(obs)?.q))
    }

    /// Greedy policy callback for [`crate::crowdsim::rollout`].
    pub fn greedy_policy(&self) -> impl FnMut(&Observation) -> Result<Command> + '_ {
        move |obs| Ok(Command::Discrete(greedy(&self.q_values(obs)?.q)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowdsim::{CrowdEnv, ScenarioConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn dueling_examples() {
        let q = dueling(0.2, &[0.1, 0.3, -0.4]);
        for (a, b) in q.iter().zip([0.3, 0.5, -0.2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let shifted = dueling(0.2, &[5.1, 5.3, 4.6]);
        for (a, b) in q.iter().zip(&shifted) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_eq!(greedy(&q), 1);
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(greedy(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(greedy(&[0.0; 81]), 0);
    }

    #[test]
    fn epsilon_schedule() {
        let c = PolicyConfig::default();
        assert_eq!(c.epsilon(0), 0.5);
        assert_abs_diff_eq!(c.epsilon(2000), 0.26, epsilon = 1e-12);
        assert_eq!(c.epsilon(4000), 0.02);
        assert_eq!(c.epsilon(9000), 0.02);
    }

    #[test]
    fn lone_robot_attends_to_itself() {
        let p = HyperPlanner::new(PolicyConfig::default()).unwrap();
        let env = CrowdEnv::new(ScenarioConfig::simple().with_humans(0)).unwrap();
        let out = p.q_values(&env.observation()).unwrap();
        assert_eq!(out.attention, Array2::from_elem((1, 1), 1.0));
        assert_eq!(out.q.len(), 81);
    }

    #[test]
    fn forward_matches_dueling_identity() {
        let p = HyperPlanner::new(PolicyConfig::default()).unwrap();
        let env = CrowdEnv::new(ScenarioConfig::simple().with_seed(4)).unwrap();
        let out = p.q_values(&env.observation()).unwrap();
        let expect = dueling(out.v, &out.advantages);
        for (a, b) in out.q.iter().zip(&expect) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_eq!(out.attention.dim(), (6, 6));
        for row in out.attention.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        assert!(out.embedding.norm() < 1.0);
    }

    #[test]
    fn batch_rows_match_single_passes() {
        let p = HyperPlanner::new(PolicyConfig::default()).unwrap();
        let mut env = CrowdEnv::new(ScenarioConfig::simple()).unwrap();
        let obs: Vec<Observation> = (0..4).map(|s| env.reset_with_seed(s)).collect();
        let flat: Vec<f64> = obs.iter().flat_map(|o| o.flatten()).collect();
        let states = Array2::from_shape_vec((4, flat.len() / 4), flat).unwrap();
        let batch = p.q_batch(&states, 5).unwrap();
        for (i, o) in obs.iter().enumerate() {
            let single = p.q_values(o).unwrap().q;
            for (a, b) in batch.row(i).iter().zip(&single) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let p = HyperPlanner::new(PolicyConfig::default()).unwrap();
        let states = Array2::zeros((2, 20));
        assert!(matches!(p.q_batch(&states, 5), Err(Error::DimensionMismatch { expected: 34, found: 20 })));
    }
}
