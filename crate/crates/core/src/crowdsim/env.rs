use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{action_space, Action, NUM_ACTIONS};
use super::orca::{self, OrcaAgent, OrcaParams};
use super::scenario::{random_point, spawn_humans, ScenarioConfig};
use super::state::{HumanState, Observation, RobotState};
use super::vec2::{min_distance_during_step, Vec2};
use crate::error::{Error, Result};

pub const REWARD_SUCCESS: f64 = 0.25;
pub const REWARD_COLLISION: f64 = -0.25;
pub const GOAL_DISTANCE_WEIGHT: f64 = 0.2;
pub const DISCOMFORT_DIST: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub kind: OutcomeKind,
    /// Seconds elapsed when the episode ended.
    pub nav_time: f64,
    /// Undiscounted sum of extrinsic rewards.
    pub cumulative_return: f64,
}

/// Safety term: negative inside the discomfort shell, zero outside.
pub fn discomfort_penalty(surface_distance: f64) -> f64 {
    if surface_distance < DISCOMFORT_DIST {
        surface_distance - DISCOMFORT_DIST
    } else {
        0.0
    }
}

/// Extrinsic reward for arriving in `next`: `+0.25` on success, `-0.25` on
/// collision, otherwise `-0.2·d_goal + Σ f(d_i)` over surface distances.
pub fn extrinsic_reward(next: &Observation, outcome: Option<OutcomeKind>) -> f64 {
    match outcome {
        Some(OutcomeKind::Success) => REWARD_SUCCESS,
        Some(OutcomeKind::Collision) => REWARD_COLLISION,
        _ => -GOAL_DISTANCE_WEIGHT * next.robot.goal_distance() + next.surface_distances().map(discomfort_penalty).sum::<f64>(),
    }
}

/// A robot command: one of the 81 discrete actions or a raw velocity
/// (clamped to the robot's max speed), the latter used by scripted policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Discrete(usize),
    Velocity(Vec2),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Human {
    pub state: HumanState,
    pub goal: Vec2,
    pub v_pref: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
}

/// Holonomic robot among ORCA humans that never perceive it.
#[derive(Debug, Clone)]
pub struct CrowdEnv {
    cfg: ScenarioConfig,
    actions: Vec<Action>,
    orca: OrcaParams,
    rng: ChaCha8Rng,
    robot: RobotState,
    humans: Vec<Human>,
    steps: usize,
    done: bool,
    cumulative: f64,
    robot_present: bool,
    human_collisions: usize,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl CrowdEnv {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let orca = OrcaParams {
            time_horizon: cfg.orca_time_horizon,
            neighbor_dist: cfg.orca_neighbor_dist,
            max_neighbors: cfg.orca_max_neighbors,
            time_step: cfg.timestep,
        };
        let robot = RobotState {
            position: cfg.robot_start(),
            velocity: Vec2::ZERO,
            radius: cfg.robot_radius,
            goal: cfg.robot_goal(),
            max_speed: cfg.robot_v_max,
            heading: cfg.robot_start_heading(),
        };
        let mut env = Self {
            actions: action_space(cfg.robot_v_max),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            orca,
            robot,
            humans: Vec::new(),
            steps: 0,
            done: false,
            cumulative: 0.0,
            robot_present: true,
            human_collisions: 0,
            cfg,
        };
        env.reset();
        Ok(env)
    }

    /// Without a robot the episode only ends by timeout and the robot never
    /// moves; human dynamics are unaffected either way.
    pub fn set_robot_present(&mut self, present: bool) {
        self.robot_present = present;
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn humans(&self) -> &[Human] {
        &self.humans
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.timestep
    }

    /// Human-human contacts seen since the last reset.
    pub fn human_collisions(&self) -> usize {
        self.human_collisions
    }

    /// Resets using the configured seed.
    pub fn reset(&mut self) -> Observation {
        self.reset_with_seed(self.cfg.seed)
    }

    pub fn reset_with_seed(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let spawns = spawn_humans(&self.cfg, &mut self.rng);
        let humans = spawns
            .into_iter()
            .map(|s| Human {
                state: HumanState { position: s.position, velocity: Vec2::ZERO, radius: self.cfg.human_radius },
                goal: s.goal,
                v_pref: self.cfg.human_v_pref,
            })
            .collect();
        let robot = RobotState {
            position: self.cfg.robot_start(),
            velocity: Vec2::ZERO,
            radius: self.cfg.robot_radius,
            goal: self.cfg.robot_goal(),
            max_speed: self.cfg.robot_v_max,
            heading: self.cfg.robot_start_heading(),
        };
        self.reset_to(robot, humans)
    }

    /// Starts an episode from an explicit layout; the RNG is left as is.
    pub fn reset_to(&mut self, robot: RobotState, humans: Vec<Human>) -> Observation {
        self.robot = robot;
        self.humans = humans;
        self.steps = 0;
        self.done = false;
        self.cumulative = 0.0;
        self.human_collisions = 0;
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        Observation { robot: self.robot, humans: self.humans.iter().map(|h| h.state).collect(), time: self.time() }
    }

    fn preferred_velocity(&self, h: &Human) -> Vec2 {
        let to_goal = h.goal - h.state.position;
        let d = to_goal.length();
        if d > h.v_pref {
            to_goal / d * h.v_pref
        } else {
            to_goal
        }
    }

    fn human_velocities(&self) -> Vec<Vec2> {
        let agents: Vec<OrcaAgent> = self
            .humans
            .iter()
            .map(|h| OrcaAgent {
                position: h.state.position,
                velocity: h.state.velocity,
                radius: h.state.radius + self.cfg.orca_radius_margin,
            })
            .collect();
        let preferred: Vec<Vec2> = self.humans.iter().map(|h| self.preferred_velocity(h)).collect();
        let speeds: Vec<f64> = self.humans.iter().map(|h| h.v_pref).collect();
        orca::orca_policy(&agents, &preferred, &speeds, &self.orca)
    }

    /// Turns a command into the action actually executed.
    pub fn resolve(&self, cmd: Command) -> Result<Action> {
        match cmd {
            Command::Discrete(i) => {
                if i >= NUM_ACTIONS {
                    return Err(Error::Config(format!("action index {i} out of range")));
                }
                Ok(self.actions[i])
            }
            Command::Velocity(v) => {
                if !v.is_finite() {
                    return Err(Error::NonFinite("velocity command".into()));
                }
                let speed = v.length().min(self.robot.max_speed);
                if speed == 0.0 {
                    Ok(Action::STAY)
                } else {
                    Ok(Action { speed, heading: wrap_angle(v.y.atan2(v.x)) })
                }
            }
        }
    }

    pub fn step(&mut self, cmd: Command) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let action = self.resolve(cmd)?;
        let dt = self.cfg.timestep;
        let human_vel = self.human_velocities();

        let robot_vel = if self.robot_present { action.velocity() } else { Vec2::ZERO };
        let robot_disp = robot_vel * dt;
        let combined = |h: &Human| h.state.radius + self.robot.radius;

        let collision = self.robot_present
            && self.humans.iter().zip(&human_vel).any(|(h, v)| {
                min_distance_during_step(self.robot.position, robot_disp, h.state.position, *v * dt) < combined(h)
            });

        for i in 0..self.humans.len() {
            for j in 0..i {
                let (a, b) = (&self.humans[i], &self.humans[j]);
                let d = min_distance_during_step(a.state.position, human_vel[i] * dt, b.state.position, human_vel[j] * dt);
                if d < a.state.radius + b.state.radius {
                    self.human_collisions += 1;
                }
            }
        }

        for (h, v) in self.humans.iter_mut().zip(&human_vel) {
            h.state.position += *v * dt;
            h.state.velocity = *v;
        }
        if self.cfg.regoal() {
            for i in 0..self.humans.len() {
                let h = self.humans[i];
                if (h.goal - h.state.position).length() < h.state.radius {
                    self.humans[i].goal = random_point(&self.cfg, &mut self.rng);
                }
            }
        }
        if self.robot_present {
            self.robot.position += robot_disp;
            self.robot.velocity = robot_vel;
            if !action.is_stay() {
                self.robot.heading = wrap_angle(action.heading);
            }
        }
        self.steps += 1;

        let reached = self.robot_present && self.robot.goal_distance() < self.robot.radius;
        let timed_out = self.steps >= self.cfg.max_steps();
        let kind = if collision {
            Some(OutcomeKind::Collision)
        } else if reached {
            Some(OutcomeKind::Success)
        } else if timed_out {
            Some(OutcomeKind::Timeout)
        } else {
            None
        };
        let observation = self.observation();
        let reward = extrinsic_reward(&observation, kind);
        self.cumulative += reward;
        self.done = kind.is_some();
        let outcome = kind.map(|kind| EpisodeOutcome { kind, nav_time: self.time(), cumulative_return: self.cumulative });
        Ok(StepResult { observation, action, reward, done: self.done, outcome })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empty() -> CrowdEnv {
        CrowdEnv::new(ScenarioConfig::simple().with_humans(0)).unwrap()
    }

    #[test]
    fn reward_cases() {
        let mut env = empty();
        let mut obs = env.reset();
        assert_eq!(extrinsic_reward(&obs, Some(OutcomeKind::Success)), 0.25);
        assert_eq!(extrinsic_reward(&obs, Some(OutcomeKind::Collision)), -0.25);
        obs.robot.position = Vec2::new(0.0, 2.0);
        assert_abs_diff_eq!(extrinsic_reward(&obs, None), -0.4, epsilon = 1e-15);
        obs.robot.position = Vec2::new(0.0, 3.0);
        obs.humans.push(HumanState { position: Vec2::new(0.7, 3.0), velocity: Vec2::ZERO, radius: 0.3 });
        assert_abs_diff_eq!(extrinsic_reward(&obs, None), -0.3, epsilon = 1e-12);
        env.step(Command::Discrete(0)).unwrap();
    }

    #[test]
    fn staying_keeps_position_and_heading() {
        let mut env = empty();
        let before = env.observation();
        let r = env.step(Command::Discrete(0)).unwrap();
        assert_eq!(r.observation.robot.position, before.robot.position);
        assert_eq!(r.observation.robot.heading, before.robot.heading);
        assert!(!r.done);
    }

    #[test]
    fn reaching_goal_is_success() {
        let mut env = empty();
        let mut robot = env.observation().robot;
        robot.position = Vec2::new(0.0, 3.6);
        env.reset_to(robot, vec![]);
        // Heading index 4 is straight up; top speed covers 0.25 m.
        let r = env.step(Command::Discrete(1 + 64 + 4)).unwrap();
        assert!(r.done);
        assert_eq!(r.outcome.unwrap().kind, OutcomeKind::Success);
        assert_eq!(r.reward, 0.25);
        assert!(matches!(env.step(Command::Discrete(0)), Err(Error::EpisodeDone)));
    }

    #[test]
    fn driving_into_human_is_collision() {
        let mut env = empty();
        let robot = env.observation().robot;
        let human = Human {
            state: HumanState { position: robot.position + Vec2::new(0.0, 0.8), velocity: Vec2::ZERO, radius: 0.3 },
            goal: robot.position + Vec2::new(0.0, 0.8),
            v_pref: 1.0,
        };
        env.reset_to(robot, vec![human]);
        let r = env.step(Command::Discrete(1 + 64 + 4)).unwrap();
        assert_eq!(r.outcome.unwrap().kind, OutcomeKind::Collision);
        assert_eq!(r.reward, -0.25);
    }

    #[test]
    fn collision_beats_success() {
        let mut env = empty();
        let mut robot = env.observation().robot;
        robot.position = Vec2::new(0.0, 3.6);
        let human = Human {
            state: HumanState { position: Vec2::new(0.0, 4.3), velocity: Vec2::ZERO, radius: 0.3 },
            goal: Vec2::new(0.0, 4.3),
            v_pref: 1.0,
        };
        env.reset_to(robot, vec![human]);
        let r = env.step(Command::Discrete(1 + 64 + 4)).unwrap();
        assert_eq!(r.outcome.unwrap().kind, OutcomeKind::Collision);
    }

    #[test]
    fn velocity_command_is_clamped() {
        let env = empty();
        let a = env.resolve(Command::Velocity(Vec2::new(0.0, -5.0))).unwrap();
        assert_eq!(a.speed, 1.0);
        assert_abs_diff_eq!(a.heading, 1.5 * std::f64::consts::PI, epsilon = 1e-15);
    }

    #[test]
    fn same_seed_same_start() {
        let mut a = CrowdEnv::new(ScenarioConfig::complex_circle().with_seed(9)).unwrap();
        let b = CrowdEnv::new(ScenarioConfig::complex_circle().with_seed(9)).unwrap();
        assert_eq!(a.observation(), b.observation());
        assert_eq!(a.observation().humans.len(), 10);
        assert_ne!(a.reset_with_seed(10), b.observation());
    }
}
