//! Decision-makers plugged into the episode engine.

mod prompt;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};

pub use prompt::{render, ObservationPart, RenderedPrompt};
pub use remote::{RemoteConfig, RemotePolicy};
pub use scripted::{oracle_target, ForwardPolicy, NoisyOraclePolicy, OraclePolicy, RandomPolicy, SCRIPTED_CONFIDENCE};

use crate::episode::{Decision, DecisionView};
use crate::error::PolicyError;

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Random {
        #[serde(default)]
        seed: u64,
    },
    Forward,
    Oracle,
    NoisyOracle {
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    Remote(RemoteConfig),
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            PolicyConfig::NoisyOracle { p, .. } if !(0.0..=1.0).contains(p) => {
                Err(PolicyError::Config(format!("noise p = {p} outside [0, 1]")))
            }
            PolicyConfig::Remote(r) => r.validate(),
            _ => Ok(()),
        }
    }

    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicyConfig::Remote(_))
    }

    pub fn build(&self) -> Result<Box<dyn Policy>, PolicyError> {
        self.validate()?;
        Ok(match self {
            PolicyConfig::Random { seed } => Box::new(RandomPolicy::new(*seed)),
            PolicyConfig::Forward => Box::new(ForwardPolicy),
            PolicyConfig::Oracle => Box::new(OraclePolicy),
            PolicyConfig::NoisyOracle { p, seed } => Box::new(NoisyOraclePolicy::new(*p, *seed)),
            PolicyConfig::Remote(r) => Box::new(RemotePolicy::new(r.clone())?),
        })
    }
}
