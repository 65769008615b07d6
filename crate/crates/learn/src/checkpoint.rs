use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::trpo::Agent;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Agent snapshot: layer shapes and row-major weights of both networks,
/// `log_std`, value-optimizer moments and the seed, tagged with the hash of
/// the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub agent: Agent,
}

impl Checkpoint {
    pub fn new(agent: &Agent, config_hash: &str) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            seed: agent.config.seed,
            agent: agent.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(LearnError::Checkpoint(format!("unsupported format version {}", c.format_version)));
        }
        for l in c.agent.policy.mean.layers.iter().chain(&c.agent.value.layers) {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(LearnError::Checkpoint("layer shape does not match its weights".into()));
            }
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
