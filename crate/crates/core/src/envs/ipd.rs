use super::{EnvError, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Cooperate,
    Defect,
}

impl Move {
    pub fn index(self) -> usize {
        match self {
            Move::Cooperate => 0,
            Move::Defect => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Move::Cooperate),
            1 => Some(Move::Defect),
            _ => None,
        }
    }
}

/// Extrinsic payoffs `(row player, column player)`.
pub fn payoff(a: Move, b: Move) -> (f64, f64) {
    use Move::*;
    match (a, b) {
        (Cooperate, Cooperate) => (-1.0, -1.0),
        (Cooperate, Defect) => (-3.0, 0.0),
        (Defect, Cooperate) => (0.0, -3.0),
        (Defect, Defect) => (-2.0, -2.0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IpdState {
    /// `None` before the first round.
    pub last: Option<(Move, Move)>,
    pub round_index: usize,
}

/// Two-player memory-1 iterated prisoner's dilemma with a fixed horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipd {
    episode_length: usize,
}

impl Ipd {
    pub fn new(episode_length: usize) -> Result<Self, EnvError> {
        if episode_length == 0 {
            return Err(EnvError::Config("episode_length must be at least 1".into()));
        }
        Ok(Self { episode_length })
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    pub fn reset(&self) -> IpdState {
        IpdState {
            last: None,
            round_index: 0,
        }
    }

    pub fn step(&self, state: &IpdState, joint: (Move, Move)) -> Result<(IpdState, StepOutcome), EnvError> {
        if state.round_index >= self.episode_length {
            return Err(EnvError::Terminated);
        }
        let (r0, r1) = payoff(joint.0, joint.1);
        let next = IpdState {
            last: Some(joint),
            round_index: state.round_index + 1,
        };
        let observations = vec![encode(&next, 0), encode(&next, 1)];
        Ok((
            next,
            StepOutcome {
                observations,
                env_rewards: vec![r0, r1],
                done: state.round_index + 1 == self.episode_length,
            },
        ))
    }

    /// One-hot over `{initial, CC, CD, DC, DD}` with the pair ordered as
    /// (own move, other's move).
    pub fn observe(&self, state: &IpdState, agent: usize) -> Result<Vec<f64>, EnvError> {
        if agent > 1 {
            return Err(EnvError::BadAgent(agent));
        }
        Ok(encode(state, agent))
    }
}

fn encode(state: &IpdState, agent: usize) -> Vec<f64> {
    let mut obs = vec![0.0; 5];
    let slot = match state.last {
        None => 0,
        Some((a, b)) => {
            let (own, other) = if agent == 0 { (a, b) } else { (b, a) };
            1 + 2 * own.index() + other.index()
        }
    };
    obs[slot] = 1.0;
    obs
}
