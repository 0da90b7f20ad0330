use std::io::Write;

use serde::{Deserialize, Serialize};

use super::action::{nearest_action, Action};
use super::env::{Command, CrowdEnv, EpisodeOutcome};
use super::orca::{compute_velocity, OrcaAgent, OrcaParams};
use super::scenario::ScenarioConfig;
use super::state::{HumanState, Observation, RobotState};
use super::vec2::Vec2;
use crate::error::Result;

/// One transition: the observation acted on, what was done, and what followed.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub observation: Observation,
    pub command: Command,
    pub action: Action,
    /// Discrete index of the command, or of the nearest discrete action for
    /// velocity commands.
    pub action_index: usize,
    pub reward: f64,
    pub done: bool,
    pub next: Observation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub outcome: EpisodeOutcome,
    pub steps: Vec<TraceStep>,
}

/// Drives one episode of `cfg` seeded with `seed` to termination.
pub fn rollout<P>(cfg: &ScenarioConfig, seed: u64, mut policy: P) -> Result<Rollout>
where
    P: FnMut(&Observation) -> Result<Command>,
{
    let mut env = CrowdEnv::new(cfg.clone())?;
    let mut obs = env.reset_with_seed(seed);
    let mut steps = Vec::with_capacity(cfg.max_steps());
    loop {
        let command = policy(&obs)?;
        let r = env.step(command)?;
        let action_index = match command {
            Command::Discrete(i) => i,
            Command::Velocity(v) => nearest_action(env.actions(), v),
        };
        steps.push(TraceStep {
            observation: obs,
            command,
            action: r.action,
            action_index,
            reward: r.reward,
            done: r.done,
            next: r.observation.clone(),
        });
        obs = r.observation;
        if let Some(outcome) = r.outcome {
            return Ok(Rollout { outcome, steps });
        }
    }
}

pub fn csv_header(n_humans: usize) -> String {
    let mut cols: Vec<String> = ["t", "px", "py", "vx", "vy", "r", "gx", "gy", "v_max", "theta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..n_humans {
        for f in ["px", "py", "vx", "vy", "r"] {
            cols.push(format!("h{i}_{f}"));
        }
    }
    cols.extend(["action", "reward", "done"].map(String::from));
    cols.join(",")
}

impl Rollout {
    /// One row per step with the state the action was taken in.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.steps.first().map_or(0, |s| s.observation.humans.len());
        writeln!(w, "{}", csv_header(n))?;
        for s in &self.steps {
            let mut fields = vec![format!("{}", s.observation.time)];
            fields.extend(s.observation.robot.to_array().iter().map(|v| format!("{v}")));
            for h in &s.observation.humans {
                fields.extend(h.to_array().iter().map(|v| format!("{v}")));
            }
            fields.push(s.action_index.to_string());
            fields.push(format!("{}", s.reward));
            fields.push((s.done as u8).to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn robot_path(&self) -> Vec<Vec2> {
        let mut p: Vec<Vec2> = self.steps.iter().map(|s| s.observation.robot.position).collect();
        if let Some(last) = self.steps.last() {
            p.push(last.next.robot.position);
        }
        p
    }
}

pub fn stay_policy(_: &Observation) -> Result<Command> {
    Ok(Command::Discrete(0))
}

fn goal_velocity(robot: &RobotState, dt: f64) -> Vec2 {
    let to_goal = robot.goal - robot.position;
    let v = to_goal / dt;
    if v.length() > robot.max_speed {
        v.normalize_or_zero() * robot.max_speed
    } else {
        v
    }
}

/// Heads for the goal at full speed, ignoring humans.
pub fn straight_to_goal(timestep: f64) -> impl FnMut(&Observation) -> Result<Command> {
    move |obs| Ok(Command::Velocity(goal_velocity(&obs.robot, timestep)))
}

/// The robot runs ORCA itself, treating humans as reciprocating agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaRobot {
    /// Radius inflation the robot uses for itself.
    pub safety_margin: f64,
    pub time_horizon: f64,
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    pub timestep: f64,
}

impl OrcaRobot {
    pub const DEFAULT_MARGIN: f64 = 0.1;

    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            safety_margin: Self::DEFAULT_MARGIN,
            time_horizon: cfg.orca_time_horizon,
            neighbor_dist: cfg.orca_neighbor_dist,
            max_neighbors: cfg.orca_max_neighbors,
            timestep: cfg.timestep,
        }
    }

    pub fn velocity(&self, obs: &Observation) -> Vec2 {
        let robot = &obs.robot;
        let mut agents = Vec::with_capacity(obs.humans.len() + 1);
        agents.push(OrcaAgent { position: robot.position, velocity: robot.velocity, radius: robot.radius + self.safety_margin });
        agents.extend(obs.humans.iter().map(|h: &HumanState| OrcaAgent { position: h.position, velocity: h.velocity, radius: h.radius }));
        let params = OrcaParams {
            time_horizon: self.time_horizon,
            neighbor_dist: self.neighbor_dist,
            max_neighbors: self.max_neighbors,
            time_step: self.timestep,
        };
        compute_velocity(&agents, 0, goal_velocity(robot, self.timestep), robot.max_speed, &params)
    }

    pub fn command(&self, obs: &Observation) -> Result<Command> {
        Ok(Command::Velocity(self.velocity(obs)))
    }
}
