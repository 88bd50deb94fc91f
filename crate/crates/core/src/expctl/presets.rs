//! Built-in configurations, one per experiment.
//!
//! All presets share one set of learning rates, tuned on the plain
//! two-agent room; the adversarial variants differ only in roster. The gift
//! cost coefficient is divided by the number of recipients, so a giver's cost
//! per recipient is the same in every room size.

use super::config::{ConfigError, EnvKind, RunConfig};
use crate::agents::AgentMode;
use crate::learner::Hyperparams;

pub const PRESET_NAMES: [&str; 14] = [
    "er2_lio",
    "er42_lio",
    "er43_lio",
    "ipd_lio",
    "er2_partial",
    "er42_partial",
    "ipd_partial",
    "er2_fake",
    "er2_bypass",
    "er42_bypass",
    "er43_bypass",
    "er2_reverse",
    "er42_reverse",
    "er43_reverse",
];

/// Learning rates used by every preset, with `alpha` stated per recipient.
pub(crate) const PRESET_HYPER: Hyperparams = Hyperparams {
    gamma: 0.99,
    beta: 8e-5,
    alpha: 2e-4,
    eta_lr: 10.0,
    batch: 1,
};

fn with_adversary(n: usize, mode: AgentMode) -> Vec<AgentMode> {
    let mut roster = vec![AgentMode::LioBenign; n];
    roster[n - 1] = mode;
    roster
}

/// The named preset, or an error listing the valid names.
pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let (env, n, m) = match name.split('_').next() {
        Some("er2") => (EnvKind::EscapeRoom, 2, 1),
        Some("er42") => (EnvKind::EscapeRoom, 4, 2),
        Some("er43") => (EnvKind::EscapeRoom, 4, 3),
        Some("ipd") => (EnvKind::Ipd, 2, 1),
        _ => return Err(ConfigError::UnknownPreset(name.to_string())),
    };
    if !PRESET_NAMES.contains(&name) {
        return Err(ConfigError::UnknownPreset(name.to_string()));
    }
    let base = RunConfig::default();
    let mode = match name.rsplit('_').next() {
        Some("lio") => AgentMode::LioBenign,
        Some("partial") => AgentMode::PartialComm,
        Some("fake") => AgentMode::FakeIncentive { c_adv: base.c_adv },
        Some("bypass") => AgentMode::Bypass,
        Some("reverse") => AgentMode::Reverse,
        _ => unreachable!("names checked above"),
    };
    Ok(RunConfig {
        preset: name.to_string(),
        env,
        n_agents: n,
        m_lever: m,
        roster: with_adversary(n, mode),
        hyper: Hyperparams {
            alpha: PRESET_HYPER.alpha / (n - 1) as f64,
            ..PRESET_HYPER
        },
        out_dir: format!("out/{name}").into(),
        ..base
    })
}
