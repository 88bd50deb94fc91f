//! Agent roster: policy heads, manipulation modes and per-agent reward
//! assembly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::diffcore::{softmax, Mlp, OutputActivation, ParamVector};
use crate::envs::Game;
use crate::incentive::{FakeIncentive, IncentiveFunction};

/// How an agent learns, acts and exchanges incentives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentMode {
    /// Learns a policy on env + received incentives and an incentive function.
    LioBenign,
    /// Policy gradient on env + received incentives; gives nothing.
    PurePg,
    /// Discards received incentives but still learns and emits its own.
    PartialComm,
    /// Sends a constant `c_adv` to everyone; its own policy learns on env
    /// reward only.
    FakeIncentive { c_adv: f64 },
    /// Never moves and gives nothing.
    Bypass,
    /// Benign giver and receiver whose policy descends its own return.
    Reverse,
}

impl AgentMode {
    pub fn name(&self) -> &'static str {
        match self {
            AgentMode::LioBenign => "lio",
            AgentMode::PurePg => "pg",
            AgentMode::PartialComm => "partial",
            AgentMode::FakeIncentive { .. } => "fake",
            AgentMode::Bypass => "bypass",
            AgentMode::Reverse => "reverse",
        }
    }

    pub fn is_adversary(&self) -> bool {
        !matches!(self, AgentMode::LioBenign | AgentMode::PurePg)
    }

    pub fn trains_policy(&self) -> bool {
        !matches!(self, AgentMode::Bypass)
    }

    /// Whether received incentives count towards this agent's reward.
    pub fn receives_incentives(&self) -> bool {
        !matches!(self, AgentMode::PartialComm | AgentMode::FakeIncentive { .. })
    }

    /// Whether this agent's policy update depends on other agents' incentive
    /// parameters.
    pub fn learns_from_incentives(&self) -> bool {
        self.receives_incentives() && self.trains_policy()
    }

    pub fn has_learned_channel(&self) -> bool {
        matches!(self, AgentMode::LioBenign | AgentMode::PartialComm | AgentMode::Reverse)
    }

    /// +1 for gradient ascent on the agent's return, -1 for descent.
    pub fn update_sign(&self) -> f64 {
        match self {
            AgentMode::Reverse => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentMode {
    type Err = String;

    /// Parses the mode name; `fake` gets a placeholder `c_adv` that the
    /// config loader overwrites.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lio" => AgentMode::LioBenign,
            "pg" => AgentMode::PurePg,
            "partial" => AgentMode::PartialComm,
            "fake" => AgentMode::FakeIncentive { c_adv: 0.0 },
            "bypass" => AgentMode::Bypass,
            "reverse" => AgentMode::Reverse,
            other => {
                return Err(format!(
                    "unknown mode '{other}' (expected lio, pg, partial, fake, bypass or reverse)"
                ))
            }
        })
    }
}

/// What an agent emits to the others on every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel<'a> {
    Learned(&'a IncentiveFunction),
    Constant(FakeIncentive),
    None,
}

/// Network sizes and bounds shared by every agent of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSettings {
    pub policy_hidden: usize,
    pub incentive_hidden: usize,
    pub r_max: f64,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            policy_hidden: 32,
            incentive_hidden: 16,
            r_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub index: usize,
    pub mode: AgentMode,
    pub policy_net: Mlp,
    pub policy_params: ParamVector,
    pub incentive: Option<IncentiveFunction>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        index: usize,
        mode: AgentMode,
        game: &Game,
        settings: &AgentSettings,
        rng: &mut R,
    ) -> Self {
        let policy_net = Mlp::new(
            game.obs_len(),
            settings.policy_hidden,
            game.n_actions(),
            OutputActivation::Identity,
        );
        let policy_params = policy_net.init_params(rng);
        // Every agent draws incentive parameters so that the random stream
        // does not depend on the roster's modes.
        let incentive = IncentiveFunction::new(
            game.obs_len(),
            game.n_agents(),
            game.n_actions(),
            settings.incentive_hidden,
            settings.r_max,
            rng,
        );
        Self {
            index,
            mode,
            policy_net,
            policy_params,
            incentive: mode.has_learned_channel().then_some(incentive),
        }
    }

    pub fn channel(&self) -> Channel<'_> {
        match (&self.mode, &self.incentive) {
            (AgentMode::FakeIncentive { c_adv }, _) => Channel::Constant(FakeIncentive { c_adv: *c_adv }),
            (m, Some(f)) if m.has_learned_channel() => Channel::Learned(f),
            _ => Channel::None,
        }
    }

    pub fn logits(&self, obs: &[f64]) -> Vec<f64> {
        self.policy_net
            .forward_values(self.policy_params.values(), obs)
            .expect("observation matches policy input")
    }

    pub fn action_probs(&self, obs: &[f64]) -> Vec<f64> {
        softmax(&self.logits(obs))
    }

    /// Samples an action from the policy. Bypass agents return `noop`
    /// (the action that keeps them in place). One uniform draw is consumed
    /// regardless of mode so random streams stay aligned across rosters.
    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], noop: Option<usize>, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        if let (AgentMode::Bypass, Some(a)) = (self.mode, noop) {
            return a;
        }
        sample_categorical(&self.action_probs(obs), u)
    }
}

/// Inverse-CDF sample for a uniform draw `u` in `[0, 1)`.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left the cumulative sum a hair under 1.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Per-step reward the agent learns from, given its env reward and the
/// incentives sent to it by every other agent (giver index order).
pub fn assemble_total_reward(mode: AgentMode, env_reward: f64, incoming: &[f64]) -> f64 {
    if mode.receives_incentives() {
        incoming.iter().fold(env_reward, |acc, r| acc + r)
    } else {
        env_reward
    }
}

/// All agents of one run, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Roster {
    pub agents: Vec<Agent>,
}

impl Roster {
    pub fn new<R: Rng + ?Sized>(game: &Game, modes: &[AgentMode], settings: &AgentSettings, rng: &mut R) -> Self {
        let agents = modes
            .iter()
            .enumerate()
            .map(|(i, &m)| Agent::new(i, m, game, settings, rng))
            .collect();
        Self { agents }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn adversary(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.mode.is_adversary())
    }
}
