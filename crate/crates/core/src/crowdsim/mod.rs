//! Episodic 2-D crowd simulator: one holonomic robot, humans driven by ORCA
//! that never see the robot.

pub mod action;
pub mod env;
pub mod orca;
pub mod rollout;
pub mod scenario;
pub mod state;
pub mod vec2;

pub use action::{action_space, nearest_action, speed_level, Action, NUM_ACTIONS};
pub use env::{extrinsic_reward, Command, CrowdEnv, EpisodeOutcome, Human, OutcomeKind, StepResult};
pub use rollout::{rollout, OrcaRobot, Rollout, TraceStep};
pub use scenario::{ScenarioConfig, ScenarioKind};
pub use state::{HumanState, Observation, RobotState};
pub use vec2::Vec2;
