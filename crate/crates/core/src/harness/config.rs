use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{ModelFamily, NnConfig};
use crate::rl::{AgentConfig, Behavior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GcnSap,
    GcnEps,
    MlpSap,
    MlpEps,
    SapOnly,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GcnSap,
        Method::GcnEps,
        Method::MlpSap,
        Method::MlpEps,
        Method::SapOnly,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GcnSap => "gcn_sap",
            Method::GcnEps => "gcn_eps",
            Method::MlpSap => "mlp_sap",
            Method::MlpEps => "mlp_eps",
            Method::SapOnly => "sap_only",
            Method::Random => "random",
        }
    }

    /// Model family for learning methods, `None` for baselines.
    pub fn family(self) -> Option<ModelFamily> {
        match self {
            Method::GcnSap | Method::GcnEps => Some(ModelFamily::Gcn),
            Method::MlpSap | Method::MlpEps => Some(ModelFamily::Mlp),
            Method::SapOnly | Method::Random => None,
        }
    }

    pub fn behavior(self) -> Option<Behavior> {
        match self {
            Method::GcnSap | Method::MlpSap => Some(Behavior::Sap),
            Method::GcnEps | Method::MlpEps => Some(Behavior::EpsilonGreedy),
            Method::SapOnly | Method::Random => None,
        }
    }

    pub fn is_learning(self) -> bool {
        self.family().is_some()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
    /// Also write a per-step JSON-lines trace of evaluation episodes.
    pub trace: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            horizon: 20,
            trace: false,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub nn: NnConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::GcnSap,
            seed: 0,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            nn: NnConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        self.nn.validate()?;
        if self.eval.episodes == 0 || self.eval.horizon == 0 {
            return Err(Error::InvalidConfig(
                "eval episodes and horizon must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        };
        parsed.validate()?;
        Ok(parsed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
