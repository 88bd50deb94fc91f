//! Seeded, deterministic-transition Markov games.
//!
//! Both games expose integer actions and real-valued observations through the
//! [`Game`] wrapper so the learner does not care which one it is driving.

mod escape_room;
mod ipd;

pub use escape_room::{ErState, EscapeRoom, Position};
pub use ipd::{payoff, Ipd, IpdState, Move};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("step called on a terminated episode")]
    Terminated,
    #[error("joint action has {got} entries, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("action {action} out of range for agent {agent}")]
    BadAction { agent: usize, action: usize },
    #[error("agent index {0} out of range")]
    BadAgent(usize),
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Vec<f64>>,
    pub env_rewards: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    EscapeRoom(EscapeRoom),
    Ipd(Ipd),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GameState {
    EscapeRoom(ErState),
    Ipd(IpdState),
}

impl Game {
    pub fn n_agents(&self) -> usize {
        match self {
            Game::EscapeRoom(g) => g.n_agents(),
            Game::Ipd(_) => 2,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Game::EscapeRoom(_) => 3,
            Game::Ipd(_) => 2,
        }
    }

    pub fn obs_len(&self) -> usize {
        match self {
            Game::EscapeRoom(g) => 3 * g.n_agents(),
            Game::Ipd(_) => 5,
        }
    }

    /// Longest possible episode.
    pub fn horizon(&self) -> usize {
        match self {
            Game::EscapeRoom(g) => g.max_steps(),
            Game::Ipd(g) => g.episode_length(),
        }
    }

    /// Largest per-step environment reward any agent can receive.
    pub fn max_env_reward(&self) -> f64 {
        match self {
            Game::EscapeRoom(_) => escape_room::EXIT_REWARD,
            Game::Ipd(_) => 0.0,
        }
    }

    pub fn reset(&self) -> GameState {
        match self {
            Game::EscapeRoom(g) => GameState::EscapeRoom(g.reset()),
            Game::Ipd(g) => GameState::Ipd(g.reset()),
        }
    }

    pub fn step(&self, state: &GameState, actions: &[usize]) -> Result<(GameState, StepOutcome), EnvError> {
        match (self, state) {
            (Game::EscapeRoom(g), GameState::EscapeRoom(s)) => {
                let targets = actions
                    .iter()
                    .enumerate()
                    .map(|(agent, &a)| Position::from_index(a).ok_or(EnvError::BadAction { agent, action: a }))
                    .collect::<Result<Vec<_>, _>>()?;
                let (next, out) = g.step(s, &targets)?;
                Ok((GameState::EscapeRoom(next), out))
            }
            (Game::Ipd(g), GameState::Ipd(s)) => {
                if actions.len() != 2 {
                    return Err(EnvError::Arity {
                        expected: 2,
                        got: actions.len(),
                    });
                }
                let m0 = Move::from_index(actions[0]).ok_or(EnvError::BadAction {
                    agent: 0,
                    action: actions[0],
                })?;
                let m1 = Move::from_index(actions[1]).ok_or(EnvError::BadAction {
                    agent: 1,
                    action: actions[1],
                })?;
                let (next, out) = g.step(s, (m0, m1))?;
                Ok((GameState::Ipd(next), out))
            }
            _ => panic!("game/state kind mismatch"),
        }
    }

    pub fn observe(&self, state: &GameState, agent: usize) -> Result<Vec<f64>, EnvError> {
        match (self, state) {
            (Game::EscapeRoom(g), GameState::EscapeRoom(s)) => g.observe(s, agent),
            (Game::Ipd(g), GameState::Ipd(s)) => g.observe(s, agent),
            _ => panic!("game/state kind mismatch"),
        }
    }

    /// The action that leaves `agent` where it is, if the game has one.
    pub fn noop_action(&self, state: &GameState, agent: usize) -> Option<usize> {
        match state {
            GameState::EscapeRoom(s) => s.positions.get(agent).map(|p| p.index()),
            GameState::Ipd(_) => None,
        }
    }

    /// Whether the finished episode counts as a task success. `None` for
    /// games without a success notion.
    pub fn success(&self, state: &GameState) -> Option<bool> {
        match state {
            GameState::EscapeRoom(s) => Some(s.exited),
            GameState::Ipd(_) => None,
        }
    }
}
