//! Trajectory generation, REINFORCE policy updates and the incentive
//! hypergradient.
//!
//! One iteration of the incentivized learner:
//!
//! 1. play a batch of episodes `tau` with the current policies and incentives;
//! 2. every trainable agent takes a REINFORCE step on its assembled reward,
//!    giving `theta_hat` (descent instead of ascent for reverse agents);
//! 3. play a fresh batch `tau_hat` with `theta_hat`;
//! 4. every learned incentive channel ascends its giver's env return on
//!    `tau_hat` minus the gift cost on `tau`, differentiating through step 2;
//! 5. commit both parameter sets.
//!
//! Step 2 is recorded on a [`Tape`] with the incentive parameters as leaves,
//! so `theta_hat` is an explicit function of every channel that paid the
//! recipient. Only the returns depend on those parameters: the score vectors
//! `grad log pi(a_t | o_t)` are fixed by the already-sampled episode and enter
//! the tape as constants.

use rand::Rng;
use thiserror::Error;

use crate::agents::{assemble_total_reward, Agent, AgentMode, Channel, Roster};
use crate::diffcore::{DiffError, NodeId, ParamVector, Tape};
use crate::envs::{EnvError, Game, GameState};
use crate::incentive::{gift_cost, recipient_slot, GiftInput, IncentiveError, IncentiveMatrix};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Incentive(#[from] IncentiveError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Discount in (0, 1].
    pub gamma: f64,
    /// Inner (policy) learning rate.
    pub beta: f64,
    /// Gift-cost coefficient.
    pub alpha: f64,
    /// Outer (incentive) learning rate.
    pub eta_lr: f64,
    /// Episodes per phase.
    pub batch: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            beta: 0.1,
            alpha: 0.1,
            eta_lr: 0.01,
            batch: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.eta_lr >= 0.0 && self.eta_lr.is_finite()) {
            return Err(format!("eta_lr must be >= 0, got {}", self.eta_lr));
        }
        if self.batch == 0 {
            return Err("batch must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: GameState,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub env_rewards: Vec<f64>,
    pub incentives: IncentiveMatrix,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: GameState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn env_rewards(&self, agent: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.env_rewards[agent]).collect()
    }

    /// Rewards the agent actually learns from under its mode.
    pub fn total_rewards(&self, agent: usize, mode: AgentMode) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| assemble_total_reward(mode, s.env_rewards[agent], &s.incentives.incoming(agent)))
            .collect()
    }

    /// `(o_i, a_-i)` pairs seen by giver `i`, for the gift cost.
    pub fn gift_inputs(&self, giver: usize) -> Vec<GiftInput<'_>> {
        self.steps
            .iter()
            .map(|s| GiftInput {
                obs: &s.observations[giver],
                actions_others: others(&s.actions, giver),
            })
            .collect()
    }
}

fn others(actions: &[usize], agent: usize) -> Vec<usize> {
    actions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != agent)
        .map(|(_, &a)| a)
        .collect()
}

/// Plays one episode from reset.
pub fn generate_trajectory<R: Rng + ?Sized>(
    game: &Game,
    roster: &Roster,
    rng: &mut R,
) -> Result<Trajectory, LearnError> {
    let n = game.n_agents();
    if roster.len() != n {
        return Err(LearnError::Contract(format!(
            "roster has {} agents, game expects {n}",
            roster.len()
        )));
    }
    let mut state = game.reset();
    let mut observations: Vec<Vec<f64>> = (0..n).map(|i| game.observe(&state, i)).collect::<Result<_, _>>()?;
    let mut steps = Vec::with_capacity(game.horizon());
    loop {
        let actions: Vec<usize> = roster
            .agents
            .iter()
            .map(|a| a.select_action(&observations[a.index], game.noop_action(&state, a.index), rng))
            .collect();
        let mut incentives = IncentiveMatrix::zeros(n);
        for a in &roster.agents {
            match a.channel() {
                Channel::Learned(f) => {
                    incentives.set_row(a.index, &f.emit(&observations[a.index], &others(&actions, a.index))?)
                }
                Channel::Constant(c) => incentives.set_row(a.index, &c.emit(n - 1)),
                Channel::None => {}
            }
        }
        let (next, outcome) = game.step(&state, &actions)?;
        steps.push(Step {
            state,
            observations,
            actions,
            env_rewards: outcome.env_rewards,
            incentives,
            done: outcome.done,
        });
        state = next;
        observations = outcome.observations;
        if outcome.done {
            break;
        }
    }
    Ok(Trajectory {
        steps,
        final_state: state,
    })
}

/// Discounted returns `G_t = r_t + gamma * G_{t+1}`.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `grad_theta log pi(action | obs)` for the agent's current policy.
pub fn score(agent: &Agent, params: &[f64], obs: &[f64], action: usize) -> Result<Vec<f64>, LearnError> {
    let mut tape = Tape::new();
    let p = tape.leaf(params.to_vec());
    let x = tape.leaf(obs.to_vec());
    let logits = agent.policy_net.forward(&mut tape, p, x)?;
    let logp = tape.log_softmax(logits);
    let picked = tape.index(logp, action)?;
    let g = tape.backward(picked)?;
    Ok(g.wrt(p).to_vec())
}

/// Tape holding one iteration's inner update as a function of the incentive
/// parameters.
#[derive(Debug, Clone)]
pub struct UpdateGraph {
    tape: Tape,
    /// Incentive-parameter leaf per agent with a learned channel.
    eta: Vec<Option<NodeId>>,
    /// Updated policy parameters per trainable agent.
    theta_hat: Vec<Option<NodeId>>,
    /// The update step `theta_hat - theta` per trainable agent.
    step: Vec<Option<NodeId>>,
}

impl UpdateGraph {
    /// Records the policy update of every trainable agent on `batch`.
    pub fn record(roster: &Roster, batch: &[Trajectory], hp: &Hyperparams) -> Result<Self, LearnError> {
        if batch.is_empty() || batch.iter().any(|t| t.is_empty()) {
            return Err(LearnError::Contract(
                "policy update needs non-empty trajectories".into(),
            ));
        }
        let n = roster.len();
        let mut tape = Tape::new();
        let eta: Vec<Option<NodeId>> = roster
            .agents
            .iter()
            .map(|a| match a.channel() {
                Channel::Learned(f) => Some(tape.leaf(f.params.values().to_vec())),
                _ => None,
            })
            .collect();

        // Per trajectory, per step: each giver's emission as a tape node.
        let mut rewards: Vec<Vec<Vec<NodeId>>> = Vec::with_capacity(batch.len()); // [b][agent][t]
        for traj in batch {
            let mut per_agent: Vec<Vec<NodeId>> = vec![Vec::with_capacity(traj.len()); n];
            for s in &traj.steps {
                let mut emitted: Vec<Option<NodeId>> = vec![None; n];
                for a in &roster.agents {
                    if let (Channel::Learned(f), Some(leaf)) = (a.channel(), eta[a.index]) {
                        if roster
                            .agents
                            .iter()
                            .any(|r| r.index != a.index && r.mode.learns_from_incentives())
                        {
                            emitted[a.index] = Some(f.compute(
                                &mut tape,
                                leaf,
                                &s.observations[a.index],
                                &others(&s.actions, a.index),
                            )?);
                        }
                    }
                }
                for j in 0..n {
                    let mode = roster.agents[j].mode;
                    let mut total = tape.leaf_scalar(s.env_rewards[j]);
                    if mode.receives_incentives() {
                        for i in (0..n).filter(|&i| i != j) {
                            let term = match emitted[i] {
                                Some(node) => tape.index(node, recipient_slot(i, j))?,
                                None => tape.leaf_scalar(s.incentives.get(i, j)),
                            };
                            total = tape.add(total, term)?;
                        }
                    }
                    per_agent[j].push(total);
                }
            }
            rewards.push(per_agent);
        }

        let mut theta_hat = vec![None; n];
        let mut step = vec![None; n];
        for a in &roster.agents {
            if !a.mode.trains_policy() {
                continue;
            }
            let mut direction: Option<NodeId> = None;
            for (traj, r) in batch.iter().zip(&rewards) {
                let returns = returns_on_tape(&mut tape, &r[a.index], hp.gamma)?;
                for (s, g_t) in traj.steps.iter().zip(returns) {
                    let sc = score(
                        a,
                        a.policy_params.values(),
                        &s.observations[a.index],
                        s.actions[a.index],
                    )?;
                    let sc = tape.leaf(sc);
                    let term = tape.mul(sc, g_t)?;
                    direction = Some(match direction {
                        None => term,
                        Some(d) => tape.add(d, term)?,
                    });
                }
            }
            let direction = direction.expect("non-empty batch");
            let direction = if batch.len() > 1 {
                tape.scale(direction, 1.0 / batch.len() as f64)
            } else {
                direction
            };
            let s = tape.scale(direction, a.mode.update_sign() * hp.beta);
            let theta = tape.leaf(a.policy_params.values().to_vec());
            theta_hat[a.index] = Some(tape.add(theta, s)?);
            step[a.index] = Some(s);
        }
        Ok(Self {
            tape,
            eta,
            theta_hat,
            step,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Updated policy parameters for `agent`, or `None` if it does not train.
    pub fn theta_hat(&self, roster: &Roster, agent: usize) -> Option<ParamVector> {
        let node = self.theta_hat[agent]?;
        roster.agents[agent]
            .policy_params
            .with_values(self.tape.value(node).to_vec())
            .ok()
    }

    /// `theta_hat - theta` as recorded, before it is added to `theta`.
    pub fn update_step(&self, agent: usize) -> Option<&[f64]> {
        self.step[agent].map(|s| self.tape.value(s))
    }

    /// Gradient of giver `i`'s outer objective with respect to its incentive
    /// parameters:
    ///
    /// `grad_eta [ sum_j <theta_hat_j(eta), v_j> - alpha * L(eta, tau) ]`,
    /// where `v_j = mean_b sum_t grad log pi_hat_j(a_t | o_t) * G_i,t` is the
    /// score-function estimate of the giver's env-return gradient with respect
    /// to recipient `j`'s updated policy, taken on `new_batch`.
    pub fn hypergradient(
        &mut self,
        roster: &Roster,
        giver: usize,
        old_batch: &[Trajectory],
        new_batch: &[Trajectory],
        updated: &Roster,
        hp: &Hyperparams,
    ) -> Result<Vec<f64>, LearnError> {
        let eta = self.eta.get(giver).copied().flatten().ok_or_else(|| {
            LearnError::Contract(format!("agent {giver} has no learned incentive channel on this tape"))
        })?;
        let f = match roster.agents[giver].channel() {
            Channel::Learned(f) => f,
            _ => unreachable!("eta leaf implies a learned channel"),
        };
        let mut terms = Vec::new();
        for j in 0..roster.len() {
            if j == giver || !roster.agents[j].mode.learns_from_incentives() {
                continue;
            }
            let Some(theta_hat) = self.theta_hat[j] else {
                return Err(LearnError::Contract(format!("recipient {j} has no recorded update")));
            };
            let v = recipient_direction(&updated.agents[j], new_batch, giver, hp)?;
            let v = self.tape.leaf(v);
            terms.push(self.tape.dot(theta_hat, v)?);
        }
        let mut cost: Option<NodeId> = None;
        for traj in old_batch {
            let c = gift_cost(f, eta, &traj.gift_inputs(giver), hp.gamma, &mut self.tape)?;
            cost = Some(match cost {
                None => c,
                Some(acc) => self.tape.add(acc, c)?,
            });
        }
        let cost = cost.ok_or_else(|| LearnError::Contract("empty old batch".into()))?;
        let penalty = self.tape.scale(cost, -hp.alpha / old_batch.len() as f64);
        terms.push(penalty);
        let all = self.tape.concat(&terms);
        let root = self.tape.sum(all);
        let grads = self.tape.backward(root)?;
        Ok(grads.wrt(eta).to_vec())
    }
}

/// `G_t` as tape nodes built by backward accumulation.
fn returns_on_tape(tape: &mut Tape, rewards: &[NodeId], gamma: f64) -> Result<Vec<NodeId>, LearnError> {
    let mut out = vec![rewards[0]; rewards.len()];
    let mut next: Option<NodeId> = None;
    for t in (0..rewards.len()).rev() {
        let g = match next {
            None => rewards[t],
            Some(n) => {
                let d = tape.scale(n, gamma);
                tape.add(rewards[t], d)?
            }
        };
        out[t] = g;
        next = Some(g);
    }
    Ok(out)
}

/// `mean_b sum_t grad log pi_j(a_j,t | o_j,t) * G_giver,t` on `batch`, under
/// recipient `j`'s (updated) parameters.
fn recipient_direction(
    recipient: &Agent,
    batch: &[Trajectory],
    giver: usize,
    hp: &Hyperparams,
) -> Result<Vec<f64>, LearnError> {
    let mut v = vec![0.0; recipient.policy_params.len()];
    for traj in batch {
        let g = returns(&traj.env_rewards(giver), hp.gamma);
        for (s, gt) in traj.steps.iter().zip(g) {
            if gt == 0.0 {
                continue;
            }
            let sc = score(
                recipient,
                recipient.policy_params.values(),
                &s.observations[recipient.index],
                s.actions[recipient.index],
            )?;
            for (vk, sk) in v.iter_mut().zip(sc) {
                *vk += sk * gt;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(v)
}

/// Benign REINFORCE update of `agent` on one trajectory, with incentives as
/// recorded in it.
pub fn policy_update(
    roster: &Roster,
    agent: usize,
    traj: &Trajectory,
    hp: &Hyperparams,
) -> Result<ParamVector, LearnError> {
    let mut single = roster.clone();
    if single.agents[agent].mode == AgentMode::Reverse {
        single.agents[agent].mode = AgentMode::LioBenign;
    }
    let graph = UpdateGraph::record(&single, std::slice::from_ref(traj), hp)?;
    graph
        .theta_hat(&single, agent)
        .ok_or_else(|| LearnError::Contract(format!("agent {agent} does not train a policy")))
}

/// The reverse agent's update: the benign step with its sign flipped.
pub fn reverse_policy_update(
    roster: &Roster,
    agent: usize,
    traj: &Trajectory,
    hp: &Hyperparams,
) -> Result<ParamVector, LearnError> {
    if roster.agents[agent].mode != AgentMode::Reverse {
        return Err(LearnError::Contract(format!("agent {agent} is not in reverse mode")));
    }
    let graph = UpdateGraph::record(roster, std::slice::from_ref(traj), hp)?;
    graph
        .theta_hat(roster, agent)
        .ok_or_else(|| LearnError::Contract(format!("agent {agent} does not train a policy")))
}

/// Everything produced by one full iteration.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// Episodes played with the pre-update parameters.
    pub old: Vec<Trajectory>,
    /// Episodes played with the updated policies.
    pub new: Vec<Trajectory>,
}

/// One incentivized-learning iteration; updates `roster` in place.
pub fn lio_iteration<R: Rng + ?Sized>(
    game: &Game,
    roster: &mut Roster,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<IterationOutcome, LearnError> {
    let old = (0..hp.batch)
        .map(|_| generate_trajectory(game, roster, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut graph = UpdateGraph::record(roster, &old, hp)?;

    let mut updated = roster.clone();
    for a in updated.agents.iter_mut() {
        if let Some(p) = graph.theta_hat(roster, a.index) {
            a.policy_params = p;
        }
    }
    let new = (0..hp.batch)
        .map(|_| generate_trajectory(game, &updated, rng))
        .collect::<Result<Vec<_>, _>>()?;

    for i in 0..roster.len() {
        if !matches!(roster.agents[i].channel(), Channel::Learned(_)) {
            continue;
        }
        let grad = graph.hypergradient(roster, i, &old, &new, &updated, hp)?;
        let f = updated.agents[i].incentive.as_mut().expect("learned channel");
        f.params = f.params.axpy(hp.eta_lr, &grad)?;
    }

    for a in &updated.agents {
        if !a.policy_params.is_finite() || a.incentive.as_ref().is_some_and(|f| !f.params.is_finite()) {
            return Err(LearnError::Contract(format!(
                "agent {} parameters became non-finite",
                a.index
            )));
        }
    }
    *roster = updated;
    Ok(IterationOutcome { old, new })
}
