//! TOML experiment configuration.
//!
//! ```toml
//! agent = "mo-ac"            # adp | adp-explore | ml-ac | mo-ac | twap | closed-form
//!
//! [environment]
//! preset = "env2"            # optional base; any field below overrides it
//! [environment.market]
//! sigma = 0.3
//!
//! [train]                    # optional; unspecified fields take the defaults
//! epochs = 1000
//! critic_rate = 1e-5
//!
//! [run]
//! seeds = [0, 1, 2, 3, 4]
//! out = "runs/env2-mo-ac"
//! ```
//!
//! The jump size `eta_mean` is the MEAN of the exponential distribution.
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::params::Environment;
use crate::trainers::{Algorithm, TrainConfig};

/// What is evaluated: a learner, or one of the two reference policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Trained(Algorithm),
    Twap,
    ClosedForm,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Trained(a) => a.name(),
            AgentKind::Twap => "twap",
            AgentKind::ClosedForm => "closed-form",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twap" => Ok(AgentKind::Twap),
            "closed-form" => Ok(AgentKind::ClosedForm),
            other => other.parse().map(AgentKind::Trained).map_err(|_| {
                Error::Config(format!(
                    "unknown agent `{other}` (expected adp, adp-explore, ml-ac, mo-ac, twap or closed-form)"
                ))
            }),
        }
    }
}

impl Serialize for AgentKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AgentKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Out-of-sample episodes for the final comparison.
    #[serde(default = "default_final_episodes")]
    pub final_episodes: usize,
    /// Seed of the evaluation episodes, shared by every agent and TWAP.
    #[serde(default)]
    pub evaluation_seed: u64,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_final_episodes() -> usize {
    100
}

fn default_checkpoint_every() -> usize {
    100
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: default_seeds(),
            out: default_out(),
            final_episodes: default_final_episodes(),
            evaluation_seed: 0,
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    pub environment: Environment,
    pub train: TrainConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn new(agent: AgentKind, environment: Environment) -> Self {
        let algorithm = match agent {
            AgentKind::Trained(a) => a,
            _ => Algorithm::MoAc,
        };
        ExperimentConfig { agent, environment, train: TrainConfig::new(algorithm), run: RunConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        if self.run.final_episodes == 0 {
            return Err(Error::invalid("final_episodes", "must be at least 1"));
        }
        if let AgentKind::Trained(a) = self.agent {
            if a != self.train.algorithm {
                return Err(Error::Config(format!("agent `{a}` disagrees with train.algorithm `{}`", self.train.algorithm)));
            }
        }
        self.train.validate()
    }
}

fn merge(base: &mut Table, overrides: Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(|e| Error::Config(e.to_string()))
}

fn config_error(context: &str, e: impl fmt::Display) -> Error {
    Error::Config(format!("{context}: {e}"))
}

/// An environment table: an optional `preset` plus field overrides, or a
/// complete `market`/`penalty`/`grid` description.
pub fn environment_from_table(mut table: Table) -> Result<Environment> {
    let base = match table.remove("preset") {
        Some(Value::String(name)) => {
            let env = Environment::preset(&name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
            to_table(&env)?
        }
        Some(other) => return Err(Error::Config(format!("preset must be a string, found {other}"))),
        None => Table::new(),
    };
    let mut merged = base;
    merge(&mut merged, table);
    Value::Table(merged).try_into().map_err(|e: toml::de::Error| config_error("environment", e))
}

pub fn parse_environment(text: &str) -> Result<Environment> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| config_error("environment", e))?;
    environment_from_table(table)
}

/// `env1`, `env2`, or a path to an environment TOML file.
pub fn resolve_environment(name_or_path: &str) -> Result<Environment> {
    if let Some(env) = Environment::preset(name_or_path) {
        return Ok(env);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| Error::Config(format!("`{name_or_path}` is neither a preset nor a readable file: {e}")))?;
    parse_environment(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| config_error("config", e))?;
    let agent: AgentKind = match root.remove("agent") {
        Some(Value::String(s)) => s.parse()?,
        Some(other) => return Err(Error::Config(format!("agent must be a string, found {other}"))),
        None => return Err(Error::Config("missing top-level `agent`".into())),
    };
    let environment = match root.remove("environment") {
        Some(Value::Table(t)) => environment_from_table(t)?,
        Some(_) => return Err(Error::Config("`environment` must be a table".into())),
        None => return Err(Error::Config("missing `[environment]` table".into())),
    };
    let mut config = ExperimentConfig::new(agent, environment);
    if let Some(train) = root.remove("train") {
        let Value::Table(train) = train else {
            return Err(Error::Config("`train` must be a table".into()));
        };
        let mut base = to_table(&config.train)?;
        merge(&mut base, train);
        config.train = Value::Table(base).try_into().map_err(|e: toml::de::Error| config_error("train", e))?;
    }
    if let Some(run) = root.remove("run") {
        config.run = run.try_into().map_err(|e: toml::de::Error| config_error("run", e))?;
    }
    if let Some(key) = root.keys().next() {
        return Err(Error::Config(format!("unknown top-level key `{key}`")));
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serializes a config in the same format [`parse_config`] reads.
pub fn config_to_toml(config: &ExperimentConfig) -> Result<String> {
    let mut root = Table::new();
    root.insert("agent".into(), Value::String(config.agent.name().into()));
    root.insert("environment".into(), Value::Table(to_table(&config.environment)?));
    root.insert("train".into(), Value::Table(to_table(&config.train)?));
    root.insert("run".into(), Value::Table(to_table(&config.run)?));
    toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))
}
