use std::f64::consts::{E, TAU};

use serde::{Deserialize, Serialize};

use super::vec2::Vec2;

pub const NUM_ACTIONS: usize = 81;
pub const NUM_HEADINGS: usize = 16;
pub const NUM_SPEEDS: usize = 5;

/// Holonomic velocity command: speed in m/s and absolute heading in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub speed: f64,
    pub heading: f64,
}

impl Action {
    pub const STAY: Action = Action { speed: 0.0, heading: 0.0 };

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_polar(self.speed, self.heading)
    }

    pub fn is_stay(&self) -> bool {
        self.speed == 0.0
    }
}

/// Exponentially spaced speed of level `k ∈ 1..=5`.
pub fn speed_level(k: usize, max_speed: f64) -> f64 {
    max_speed * ((k as f64 / NUM_SPEEDS as f64).exp() - 1.0) / (E - 1.0)
}

/// The 81 discrete actions: index 0 stays still, index `1 + 16(k-1) + j`
/// moves at speed level `k` along heading `2πj/16`.
pub fn action_space(max_speed: f64) -> Vec<Action> {
    let mut out = Vec::with_capacity(NUM_ACTIONS);
    out.push(Action::STAY);
    for k in 1..=NUM_SPEEDS {
        let speed = speed_level(k, max_speed);
        for j in 0..NUM_HEADINGS {
            out.push(Action { speed, heading: TAU * j as f64 / NUM_HEADINGS as f64 });
        }
    }
    out
}

/// Index of the discrete action closest in velocity to `v`.
pub fn nearest_action(actions: &[Action], v: Vec2) -> usize {
    actions
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.velocity() - v).length().total_cmp(&(b.1.velocity() - v).length()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
