//! Hyperbolic deep reinforcement learning for robot crowd navigation.
//!
//! The crate is organised bottom-up:
//!
//! - [`hypgeom`]: Poincaré-ball primitives.
//! - [`autodiff`]: reverse-mode tape, MLP / GAT / hyperbolic layers,
//!   Riemannian Adam and the checkpoint container.
//! - [`crowdsim`]: holonomic robot among ORCA-driven humans.
//! - [`planner`]: graph encoder plus hyperbolic dueling value network.
//! - [`curiosity`]: hyperbolic intrinsic curiosity module.
//! - [`trainer`]: double-dueling TD learning and evaluation.
//! - [`analysis`]: radius/attention traces and SVG rendering.
//! - [`config`]: experiment configuration file.

pub mod analysis;
pub mod autodiff;
pub mod config;
pub mod crowdsim;
pub mod curiosity;
pub mod error;
pub mod hypgeom;
pub mod planner;
pub mod trainer;

pub use error::{Error, Result};
