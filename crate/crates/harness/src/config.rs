//! Command configurations. Each can be loaded from a TOML or JSON file and
//! then overridden field by field from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use calconf_core::agents::{HeuristicRule, RemoteEndpointConfig};
use calconf_core::conflict_gen::ConflictParams;
use calconf_core::environment::EnvConfig;
use calconf_core::rewards::RewardConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Parse a config file by extension (`.json`, otherwise TOML).
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Builtin schema name or path to a schema JSON file.
    pub schema: String,
    /// Headcounts such as "PI=1,PhD=5"; builtin schemas have defaults.
    pub plan: Option<String>,
    /// Keep only the first `users` members in org order.
    pub users: Option<usize>,
    /// Explicit member ids; overrides `users`.
    pub user_ids: Vec<String>,
    pub year: i32,
    pub seed: u64,
    pub rounds: usize,
    pub m: usize,
    pub accept_ratio: f64,
    pub rounds_per_week: usize,
    pub factors: usize,
    pub out: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let p = ConflictParams::default();
        GenerateConfig {
            schema: "research-lab".into(),
            plan: None,
            users: None,
            user_ids: Vec::new(),
            year: 2025,
            seed: 0,
            rounds: p.n_rounds,
            m: p.m,
            accept_ratio: p.accept_ratio,
            rounds_per_week: p.rounds_per_week,
            factors: p.factors,
            out: None,
        }
    }
}

impl GenerateConfig {
    pub fn conflict_params(&self) -> ConflictParams {
        ConflictParams {
            n_rounds: self.rounds,
            m: self.m,
            accept_ratio: self.accept_ratio,
            rounds_per_week: self.rounds_per_week,
            factors: self.factors,
            ..ConflictParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSpec {
    Oracle,
    Random,
    Heuristic(HeuristicRule),
    Remote,
}

impl AgentSpec {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "oracle" => AgentSpec::Oracle,
            "random" => AgentSpec::Random,
            "remote" => AgentSpec::Remote,
            other => match other.strip_prefix("heuristic:").and_then(HeuristicRule::parse) {
                Some(rule) => AgentSpec::Heuristic(rule),
                None => bail!(
                    "unknown agent {other:?} (expected oracle, random, remote or heuristic:<most-attendees|earliest-start|senior-attendee-first>)"
                ),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory of `generate`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub agent: String,
    /// Use only the first `rounds` rounds of each dataset.
    pub rounds: Option<usize>,
    /// Independent rollouts per dataset; rollouts of one dataset share a group.
    pub rollouts: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub seed: u64,
    /// Restrict to these users; all dataset users when empty.
    pub users: Vec<String>,
    pub env: EnvConfig,
    pub remote: RemoteEndpointConfig,
    /// Global cap on concurrent remote requests.
    pub request_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: None,
            agent: "oracle".into(),
            rounds: None,
            rollouts: 1,
            jobs: 0,
            seed: 0,
            users: Vec::new(),
            env: EnvConfig::default(),
            remote: RemoteEndpointConfig::default(),
            request_cap: calconf_core::agents::DEFAULT_REQUEST_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub traces: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardsConfig {
    pub traces: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub reward: RewardConfig,
    /// Compute round-wise advantages; needs at least two rollouts per group.
    pub advantages: bool,
}

/// A required path that may come from either the file or a flag.
pub fn required(path: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    path.clone().with_context(|| format!("--{name} is required (flag or config file)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_configs_parse_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("run.toml");
        std::fs::write(&t, "agent = \"random\"\nrollouts = 4\n[env]\nwindow = 5\n[remote]\nmodel = \"x\"\n").unwrap();
        let cfg: RunConfig = load_config(Some(&t)).unwrap();
        assert_eq!((cfg.agent.as_str(), cfg.rollouts, cfg.env.window), ("random", 4, 5));
        assert_eq!(cfg.env.max_turns, EnvConfig::default().max_turns);
        assert_eq!(cfg.remote.model, "x");
        let j = dir.path().join("gen.json");
        std::fs::write(&j, r#"{"rounds": 10, "m": 3}"#).unwrap();
        let g: GenerateConfig = load_config(Some(&j)).unwrap();
        assert_eq!((g.rounds, g.m, g.schema.as_str()), (10, 3, "research-lab"));
        std::fs::write(&j, r#"{"roundz": 10}"#).unwrap();
        assert!(load_config::<GenerateConfig>(Some(&j)).is_err());
    }

    #[test]
    fn agent_specs() {
        assert_eq!(AgentSpec::parse("oracle").unwrap(), AgentSpec::Oracle);
        assert_eq!(
            AgentSpec::parse("heuristic:earliest-start").unwrap(),
            AgentSpec::Heuristic(HeuristicRule::EarliestStart)
        );
        assert!(AgentSpec::parse("heuristic:tallest").is_err());
    }
}
