use serde::{Deserialize, Serialize};

use super::vec2::Vec2;

/// Observable state of one human, `[p_x, p_y, v_x, v_y, r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl HumanState {
    pub const DIM: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [self.position.x, self.position.y, self.velocity.x, self.velocity.y, self.radius]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { position: Vec2::new(s[0], s[1]), velocity: Vec2::new(s[2], s[3]), radius: s[4] }
    }
}

/// Full robot state, serialised as `[p_x, p_y, v_x, v_y, r, g_x, g_y, v_M, θ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
    pub max_speed: f64,
    /// Heading in `[0, 2π)`.
    pub heading: f64,
}

impl RobotState {
    pub const DIM: usize = 9;

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.radius,
            self.goal.x,
            self.goal.y,
            self.max_speed,
            self.heading,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            position: Vec2::new(s[0], s[1]),
            velocity: Vec2::new(s[2], s[3]),
            radius: s[4],
            goal: Vec2::new(s[5], s[6]),
            max_speed: s[7],
            heading: s[8],
        }
    }

    pub fn goal_distance(&self) -> f64 {
        (self.goal - self.position).length()
    }
}

/// What the robot senses at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub robot: RobotState,
    pub humans: Vec<HumanState>,
    /// Elapsed time in seconds.
    pub time: f64,
}

impl Observation {
    /// Length of [`Observation::flatten`] for `n_humans` humans.
    pub fn flat_len(n_humans: usize) -> usize {
        RobotState::DIM + HumanState::DIM * n_humans
    }

    /// Robot 9-vector followed by each human 5-vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::flat_len(self.humans.len()));
        out.extend_from_slice(&self.robot.to_array());
        for h in &self.humans {
            out.extend_from_slice(&h.to_array());
        }
        out
    }

    /// Inverse of [`Observation::flatten`]; time is not part of the vector.
    pub fn unflatten(flat: &[f64], time: f64) -> Self {
        let robot = RobotState::from_slice(&flat[..RobotState::DIM]);
        let humans = flat[RobotState::DIM..].chunks_exact(HumanState::DIM).map(HumanState::from_slice).collect();
        Self { robot, humans, time }
    }

    /// Surface-to-surface distance from the robot to each human.
    pub fn surface_distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.humans
            .iter()
            .map(|h| (h.position - self.robot.position).length() - h.radius - self.robot.radius)
    }
}
