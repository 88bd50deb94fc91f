//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty file is a valid (plain LIO, ER(2,1))
//! run. Roster entries are `agent.<i>.mode` and, for fake-incentive agents,
//! `agent.<i>.c_adv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::{AgentMode, AgentSettings};
use crate::envs::{EscapeRoom, Game, Ipd};
use crate::incentive::FakeIncentive;
use crate::learner::Hyperparams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    EscapeRoom,
    Ipd,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::EscapeRoom => "er",
            EnvKind::Ipd => "ipd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Label written into summary rows.
    pub preset: String,
    pub env: EnvKind,
    pub n_agents: usize,
    pub m_lever: usize,
    pub max_steps: usize,
    pub episode_length: usize,
    /// One mode per agent; fake agents carry their own `c_adv`.
    pub roster: Vec<AgentMode>,
    pub hyper: Hyperparams,
    pub r_max: f64,
    /// Default constant for fake-incentive agents without `agent.<i>.c_adv`.
    pub c_adv: f64,
    pub policy_hidden: usize,
    pub incentive_hidden: usize,
    pub episodes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let settings = AgentSettings::default();
        Self {
            preset: "custom".into(),
            env: EnvKind::EscapeRoom,
            n_agents: 2,
            m_lever: 1,
            max_steps: 5,
            episode_length: 5,
            roster: vec![AgentMode::LioBenign; 2],
            hyper: Hyperparams::default(),
            r_max: settings.r_max,
            c_adv: 50.0,
            policy_hidden: settings.policy_hidden,
            incentive_hidden: settings.incentive_hidden,
            episodes: 30_000,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

const SCALAR_KEYS: &[&str] = &[
    "preset",
    "env",
    "n_agents",
    "m_lever",
    "max_steps",
    "episode_length",
    "gamma",
    "beta",
    "alpha",
    "eta_lr",
    "batch",
    "r_max",
    "c_adv",
    "policy_hidden",
    "incentive_hidden",
    "episodes",
    "seed",
    "out_dir",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(key, format!("cannot parse {value:?} as a number")))
}

impl RunConfig {
    pub fn settings(&self) -> AgentSettings {
        AgentSettings {
            policy_hidden: self.policy_hidden,
            incentive_hidden: self.incentive_hidden,
            r_max: self.r_max,
        }
    }

    /// Builds the environment described by the config.
    pub fn game(&self) -> Result<Game, ConfigError> {
        Ok(match self.env {
            EnvKind::EscapeRoom => Game::EscapeRoom(
                EscapeRoom::new(self.n_agents, self.m_lever, self.max_steps)
                    .map_err(|e| invalid("m_lever", e.to_string()))?,
            ),
            EnvKind::Ipd => {
                Game::Ipd(Ipd::new(self.episode_length).map_err(|e| invalid("episode_length", e.to_string()))?)
            }
        })
    }

    /// Applies `key = value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut agent_modes: BTreeMap<usize, AgentMode> = BTreeMap::new();
        let mut agent_cadv: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            if let Some(rest) = key.strip_prefix("agent.") {
                let (idx, field) = rest.split_once('.').ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
                let idx: usize = idx.parse().map_err(|_| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
                match field {
                    "mode" => {
                        let mode = value.parse::<AgentMode>().map_err(|e| invalid(key, e))?;
                        agent_modes.insert(idx, mode);
                    }
                    "c_adv" => {
                        agent_cadv.insert(idx, parse_num(key, value)?);
                    }
                    _ => {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                }
                continue;
            }
            if !SCALAR_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            self.set_scalar(key, value)?;
        }

        // Fake agents named without their own constant use the global one.
        let global_cadv = self.c_adv;
        if !agent_modes.is_empty() {
            let mut roster = self.roster.clone();
            for (&i, &mode) in &agent_modes {
                if i >= roster.len() {
                    roster.resize(i + 1, AgentMode::LioBenign);
                }
                roster[i] = match mode {
                    AgentMode::FakeIncentive { .. } => AgentMode::FakeIncentive { c_adv: global_cadv },
                    m => m,
                };
            }
            if let Some(missing) = (0..roster.len()).find(|i| i >= &self.roster.len() && !agent_modes.contains_key(i)) {
                return Err(invalid(&format!("agent.{missing}.mode"), "roster has a gap"));
            }
            self.roster = roster;
        } else if seen.contains_key("n_agents") && self.roster.iter().all(|m| *m == AgentMode::LioBenign) {
            // A plain LIO roster follows the agent count.
            self.roster = vec![AgentMode::LioBenign; self.n_agents];
        }
        if seen.contains_key("c_adv") {
            for (i, m) in self.roster.iter_mut().enumerate() {
                if let AgentMode::FakeIncentive { c_adv } = m {
                    if !agent_cadv.contains_key(&i) {
                        *c_adv = global_cadv;
                    }
                }
            }
        }
        for (&i, &c) in &agent_cadv {
            match self.roster.get_mut(i) {
                Some(AgentMode::FakeIncentive { c_adv }) => *c_adv = c,
                _ => {
                    return Err(invalid(
                        &format!("agent.{i}.c_adv"),
                        "only valid for an agent in fake mode",
                    ))
                }
            }
        }
        Ok(())
    }

    fn set_scalar(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "preset" => self.preset = value.to_string(),
            "env" => {
                self.env = match value {
                    "er" => EnvKind::EscapeRoom,
                    "ipd" => EnvKind::Ipd,
                    _ => return Err(invalid(key, format!("expected er or ipd, got {value:?}"))),
                }
            }
            "n_agents" => self.n_agents = parse_num(key, value)?,
            "m_lever" => self.m_lever = parse_num(key, value)?,
            "max_steps" => self.max_steps = parse_num(key, value)?,
            "episode_length" => self.episode_length = parse_num(key, value)?,
            "gamma" => self.hyper.gamma = parse_num(key, value)?,
            "beta" => self.hyper.beta = parse_num(key, value)?,
            "alpha" => self.hyper.alpha = parse_num(key, value)?,
            "eta_lr" => self.hyper.eta_lr = parse_num(key, value)?,
            "batch" => self.hyper.batch = parse_num(key, value)?,
            "r_max" => self.r_max = parse_num(key, value)?,
            "c_adv" => self.c_adv = parse_num(key, value)?,
            "policy_hidden" => self.policy_hidden = parse_num(key, value)?,
            "incentive_hidden" => self.incentive_hidden = parse_num(key, value)?,
            "episodes" => self.episodes = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    /// Parses `text` on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.env == EnvKind::Ipd && self.n_agents != 2 {
            return Err(invalid("n_agents", "the prisoner's dilemma has exactly 2 agents"));
        }
        if self.n_agents < 2 {
            return Err(invalid("n_agents", "need at least 2 agents"));
        }
        if self.env == EnvKind::EscapeRoom && !(1 <= self.m_lever && self.m_lever < self.n_agents) {
            return Err(invalid(
                "m_lever",
                format!(
                    "need 1 <= m_lever < n_agents, got m_lever={} n_agents={}",
                    self.m_lever, self.n_agents
                ),
            ));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be at least 1"));
        }
        if self.episode_length == 0 {
            return Err(invalid("episode_length", "must be at least 1"));
        }
        if self.roster.len() != self.n_agents {
            return Err(invalid(
                "agent.<i>.mode",
                format!(
                    "roster has {} entries, n_agents is {}",
                    self.roster.len(),
                    self.n_agents
                ),
            ));
        }
        if self.env == EnvKind::Ipd && self.roster.contains(&AgentMode::Bypass) {
            return Err(invalid(
                "agent.<i>.mode",
                "bypass needs a stay action, which the prisoner's dilemma lacks",
            ));
        }
        self.hyper.validate().map_err(|m| invalid("hyperparameters", m))?;
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(invalid("r_max", "must be positive and finite"));
        }
        if !(self.c_adv > 0.0 && self.c_adv.is_finite()) {
            return Err(invalid("c_adv", "must be positive and finite"));
        }
        for (i, m) in self.roster.iter().enumerate() {
            if let AgentMode::FakeIncentive { c_adv } = m {
                if !(*c_adv > 0.0 && c_adv.is_finite()) {
                    return Err(invalid(&format!("agent.{i}.c_adv"), "must be positive and finite"));
                }
            }
        }
        if self.policy_hidden == 0 || self.incentive_hidden == 0 {
            return Err(invalid("policy_hidden", "hidden layers need at least one unit"));
        }
        Ok(())
    }

    /// Non-fatal findings, currently fake constants too small to dominate
    /// the other reward sources.
    pub fn warnings(&self) -> Vec<String> {
        let max_env = match self.env {
            EnvKind::EscapeRoom => 10.0,
            EnvKind::Ipd => 0.0,
        };
        self.roster
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match m {
                AgentMode::FakeIncentive { c_adv }
                    if !FakeIncentive { c_adv: *c_adv }.dominates(max_env, self.r_max) =>
                {
                    Some(format!(
                    "agent {i}: c_adv {c_adv} does not exceed both the largest env reward ({max_env}) and r_max ({})",
                    self.r_max
                ))
                }
                _ => None,
            })
            .collect()
    }

    /// Every setting, defaults included, in the input format. Parsing the
    /// output reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "preset = {}", self.preset);
        let _ = writeln!(s, "env = {}", self.env.name());
        let _ = writeln!(s, "n_agents = {}", self.n_agents);
        let _ = writeln!(s, "m_lever = {}", self.m_lever);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "episode_length = {}", self.episode_length);
        let _ = writeln!(s, "gamma = {}", self.hyper.gamma);
        let _ = writeln!(s, "beta = {}", self.hyper.beta);
        let _ = writeln!(s, "alpha = {}", self.hyper.alpha);
        let _ = writeln!(s, "eta_lr = {}", self.hyper.eta_lr);
        let _ = writeln!(s, "batch = {}", self.hyper.batch);
        let _ = writeln!(s, "r_max = {}", self.r_max);
        let _ = writeln!(s, "c_adv = {}", self.c_adv);
        let _ = writeln!(s, "policy_hidden = {}", self.policy_hidden);
        let _ = writeln!(s, "incentive_hidden = {}", self.incentive_hidden);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        for (i, m) in self.roster.iter().enumerate() {
            let _ = writeln!(s, "agent.{i}.mode = {}", m.name());
            if let AgentMode::FakeIncentive { c_adv } = m {
                let _ = writeln!(s, "agent.{i}.c_adv = {c_adv}");
            }
        }
        for w in self.warnings() {
            let _ = writeln!(s, "# warning: {w}");
        }
        s
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text)
}
