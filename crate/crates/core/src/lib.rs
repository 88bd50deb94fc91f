//! Incentivized multi-agent policy-gradient learning in social-dilemma
//! Markov games, with adversarial agents that manipulate the incentive
//! channel or their own policy.

pub mod agents;
pub mod diffcore;
pub mod envs;
pub mod expctl;
pub mod incentive;
pub mod learner;
