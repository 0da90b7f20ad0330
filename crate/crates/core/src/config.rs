//! Experiment configuration, read from TOML.
//!
//! ```toml
//! output_dir = "runs/simple"
//!
//! [scenario]
//! kind = "simple-circle"
//!
//! [policy]
//! embed_dim = 2
//!
//! [curiosity]
//! embed_dim = 2
//!
//! [training]
//! episodes = 5000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crowdsim::ScenarioConfig;
use crate::curiosity::CuriosityConfig;
use crate::error::{Error, Result};
use crate::planner::PolicyConfig;
use crate::trainer::TrainRunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub curiosity: CuriosityConfig,
    #[serde(default)]
    pub training: TrainRunConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            policy: PolicyConfig::default(),
            curiosity: CuriosityConfig::default(),
            training: TrainRunConfig::default(),
            output_dir: default_output_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // An omitted head count follows the scenario kind.
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let given = table.get("scenario").and_then(|s| s.get("n_humans")).is_some();
        if !given {
            cfg.scenario.n_humans = cfg.scenario.kind.default_humans();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.policy.validate()?;
        self.curiosity.validate()?;
        self.training.validate()?;
        if self.curiosity.embed_dim != self.policy.embed_dim {
            return Err(Error::Config(format!(
                "curiosity.embed_dim = {} must equal policy.embed_dim = {}",
                self.curiosity.embed_dim, self.policy.embed_dim
            )));
        }
        Ok(())
    }

    /// Same experiment with training seed `seed` and network
    /// initialisations seeded `seed` (planner) and `seed + 1` (curiosity).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.training.seed = seed;
        self.policy.init_seed = seed;
        self.curiosity.init_seed = seed.wrapping_add(1);
        self
    }

    /// Same experiment with both embedding dimensions set to `n`.
    pub fn with_embed_dim(mut self, n: usize) -> Self {
        self.policy.embed_dim = n;
        self.curiosity.embed_dim = n;
        self
    }
}
