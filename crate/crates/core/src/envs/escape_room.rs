use super::{EnvError, StepOutcome};

pub(super) const EXIT_REWARD: f64 = 10.0;
const MOVE_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Start,
    Lever,
    Door,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Start, Position::Lever, Position::Door];

    pub fn index(self) -> usize {
        match self {
            Position::Start => 0,
            Position::Lever => 1,
            Position::Door => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErState {
    pub positions: Vec<Position>,
    pub step_index: usize,
    pub terminated: bool,
    /// Set when the episode ended through the door.
    pub exited: bool,
}

/// Escape Room ER(N, M): the door opens while at least `M` agents stand at
/// the lever; walking through the open door pays +10, every move costs 1.
///
/// Actions are target positions. All agents move simultaneously and the door
/// state is evaluated after the move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscapeRoom {
    n_agents: usize,
    m_lever: usize,
    max_steps: usize,
}

impl EscapeRoom {
    pub fn new(n_agents: usize, m_lever: usize, max_steps: usize) -> Result<Self, EnvError> {
        if m_lever < 1 || m_lever >= n_agents {
            return Err(EnvError::Config(format!(
                "escape room needs 1 <= M < N, got N={n_agents}, M={m_lever}"
            )));
        }
        if max_steps < 1 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        Ok(Self {
            n_agents,
            m_lever,
            max_steps,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn m_lever(&self) -> usize {
        self.m_lever
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn reset(&self) -> ErState {
        ErState {
            positions: vec![Position::Start; self.n_agents],
            step_index: 0,
            terminated: false,
            exited: false,
        }
    }

    pub fn door_open(&self, positions: &[Position]) -> bool {
        positions.iter().filter(|&&p| p == Position::Lever).count() >= self.m_lever
    }

    pub fn step(&self, state: &ErState, targets: &[Position]) -> Result<(ErState, StepOutcome), EnvError> {
        if state.terminated {
            return Err(EnvError::Terminated);
        }
        if targets.len() != self.n_agents {
            return Err(EnvError::Arity {
                expected: self.n_agents,
                got: targets.len(),
            });
        }
        let mut rewards: Vec<f64> = state
            .positions
            .iter()
            .zip(targets)
            .map(|(from, to)| if from != to { MOVE_PENALTY } else { 0.0 })
            .collect();
        let open = self.door_open(targets);
        let mut exited = false;
        if open {
            for (r, &to) in rewards.iter_mut().zip(targets) {
                if to == Position::Door {
                    *r += EXIT_REWARD;
                    exited = true;
                }
            }
        }
        let step_index = state.step_index + 1;
        let next = ErState {
            positions: targets.to_vec(),
            step_index,
            terminated: exited || step_index >= self.max_steps,
            exited,
        };
        let observations = (0..self.n_agents).map(|a| self.encode(&next, a)).collect();
        let done = next.terminated;
        Ok((
            next,
            StepOutcome {
                observations,
                env_rewards: rewards,
                done,
            },
        ))
    }

    /// One-hot of the agent's own position followed by one-hots of every
    /// other agent's position in index order.
    pub fn observe(&self, state: &ErState, agent: usize) -> Result<Vec<f64>, EnvError> {
        if agent >= self.n_agents {
            return Err(EnvError::BadAgent(agent));
        }
        Ok(self.encode(state, agent))
    }

    fn encode(&self, state: &ErState, agent: usize) -> Vec<f64> {
        let mut obs = vec![0.0; 3 * self.n_agents];
        obs[state.positions[agent].index()] = 1.0;
        let others = (0..self.n_agents).filter(|&j| j != agent);
        for (slot, j) in others.enumerate() {
            obs[3 * (slot + 1) + state.positions[j].index()] = 1.0;
        }
        obs
    }
}
