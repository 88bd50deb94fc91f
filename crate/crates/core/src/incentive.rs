//! Learned incentive functions, their L1 gift cost, and the constant
//! (fake) incentive channel.

use rand::Rng;
use thiserror::Error;

use crate::diffcore::{DiffError, Mlp, NodeId, OutputActivation, ParamVector, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncentiveError {
    #[error("expected {expected} other-agent actions, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("action {action} out of range (game has {n_actions} actions)")]
    BadAction { action: usize, n_actions: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// `r_eta(o_i, a_-i)`: maps the giver's observation and the other agents'
/// actions to one bounded gift per other agent.
///
/// Output `k` goes to the `k`-th other agent in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveFunction {
    pub net: Mlp,
    pub params: ParamVector,
    pub r_max: f64,
    obs_len: usize,
    n_others: usize,
    n_actions: usize,
}

impl IncentiveFunction {
    pub fn new<R: Rng + ?Sized>(
        obs_len: usize,
        n_agents: usize,
        n_actions: usize,
        hidden: usize,
        r_max: f64,
        rng: &mut R,
    ) -> Self {
        let n_others = n_agents.saturating_sub(1);
        let net = Mlp::new(
            obs_len + n_others * n_actions,
            hidden,
            n_others,
            OutputActivation::Sigmoid,
        );
        let params = net.init_params(rng);
        Self {
            net,
            params,
            r_max,
            obs_len,
            n_others,
            n_actions,
        }
    }

    pub fn n_recipients(&self) -> usize {
        self.n_others
    }

    /// `[obs ∥ onehot(a_k) for each other agent k]`.
    pub fn input(&self, obs: &[f64], actions_others: &[usize]) -> Result<Vec<f64>, IncentiveError> {
        if actions_others.len() != self.n_others {
            return Err(IncentiveError::Arity {
                expected: self.n_others,
                got: actions_others.len(),
            });
        }
        if obs.len() != self.obs_len {
            return Err(DiffError::Shape {
                op: "incentive observation",
                expected: self.obs_len,
                got: obs.len(),
            }
            .into());
        }
        let mut x = Vec::with_capacity(self.net.input);
        x.extend_from_slice(obs);
        for &a in actions_others {
            if a >= self.n_actions {
                return Err(IncentiveError::BadAction {
                    action: a,
                    n_actions: self.n_actions,
                });
            }
            let mut onehot = vec![0.0; self.n_actions];
            onehot[a] = 1.0;
            x.extend(onehot);
        }
        Ok(x)
    }

    /// Records the emitted incentives, `r_max * sigmoid(net(x))`, on `tape`
    /// as a function of the parameter node `params`.
    pub fn compute(
        &self,
        tape: &mut Tape,
        params: NodeId,
        obs: &[f64],
        actions_others: &[usize],
    ) -> Result<NodeId, IncentiveError> {
        let x = self.input(obs, actions_others)?;
        let x = tape.leaf(x);
        let y = self.net.forward(tape, params, x)?;
        Ok(tape.scale(y, self.r_max))
    }

    /// Emitted incentives under the current parameters, off-tape.
    pub fn emit(&self, obs: &[f64], actions_others: &[usize]) -> Result<Vec<f64>, IncentiveError> {
        self.emit_with(self.params.values(), obs, actions_others)
    }

    pub fn emit_with(&self, params: &[f64], obs: &[f64], actions_others: &[usize]) -> Result<Vec<f64>, IncentiveError> {
        let x = self.input(obs, actions_others)?;
        let y = self.net.forward_values(params, &x)?;
        Ok(y.into_iter().map(|v| v * self.r_max).collect())
    }
}

/// One giver-side sample of the incentive function's arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct GiftInput<'a> {
    pub obs: &'a [f64],
    pub actions_others: Vec<usize>,
}

/// `L(eta, tau) = sum_t gamma^t * ||r_eta(o_t, a_-i,t)||_1`, recomputed through
/// the net so it is differentiable in `params`.
pub fn gift_cost(
    f: &IncentiveFunction,
    params: NodeId,
    steps: &[GiftInput<'_>],
    gamma: f64,
    tape: &mut Tape,
) -> Result<NodeId, IncentiveError> {
    let mut terms = Vec::with_capacity(steps.len());
    let mut discount = 1.0;
    for s in steps {
        let r = f.compute(tape, params, s.obs, &s.actions_others)?;
        let a = tape.abs(r);
        let l1 = tape.sum(a);
        terms.push(tape.scale(l1, discount));
        discount *= gamma;
    }
    if terms.is_empty() {
        return Ok(tape.leaf_scalar(0.0));
    }
    let all = tape.concat(&terms);
    Ok(tape.sum(all))
}

/// Off-tape discounted L1 norm of already-emitted incentives.
pub fn discounted_l1(emitted: &[Vec<f64>], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in emitted {
        total += discount * r.iter().map(|v| v.abs()).sum::<f64>();
        discount *= gamma;
    }
    total
}

/// Constant incentive emitted by a fake-incentive adversary to every
/// recipient on every step. It has no parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FakeIncentive {
    pub c_adv: f64,
}

impl FakeIncentive {
    pub fn emit(&self, n_recipients: usize) -> Vec<f64> {
        vec![self.c_adv; n_recipients]
    }

    /// Whether the constant dominates both the environment's reward scale and
    /// the learned channels' bound.
    pub fn dominates(&self, max_env_reward: f64, r_max: f64) -> bool {
        self.c_adv > max_env_reward && self.c_adv > r_max
    }
}

/// Per-step `N x N` gift matrix; entry `(i, j)` is what giver `i` sent to
/// recipient `j`. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveMatrix {
    n: usize,
    values: Vec<f64>,
}

impl IncentiveMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, giver: usize, recipient: usize) -> f64 {
        self.values[giver * self.n + recipient]
    }

    /// Writes giver `i`'s emission; `emitted[k]` goes to the `k`-th agent
    /// other than `i`.
    pub fn set_row(&mut self, giver: usize, emitted: &[f64]) {
        debug_assert_eq!(emitted.len(), self.n - 1);
        let recipients = (0..self.n).filter(|&j| j != giver);
        for (j, &v) in recipients.zip(emitted) {
            self.values[giver * self.n + j] = v;
        }
    }

    /// Everything sent to `recipient`, indexed by giver (self entry is 0).
    pub fn column(&self, recipient: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, recipient)).collect()
    }

    pub fn row(&self, giver: usize) -> &[f64] {
        &self.values[giver * self.n..(giver + 1) * self.n]
    }

    /// Column entries excluding the recipient itself.
    pub fn incoming(&self, recipient: usize) -> Vec<f64> {
        (0..self.n)
            .filter(|&i| i != recipient)
            .map(|i| self.get(i, recipient))
            .collect()
    }

    pub fn entries(&self) -> &[f64] {
        &self.values
    }

    /// Everything given this step, summed giver by giver.
    pub fn total_given(&self) -> f64 {
        exact_sum((0..self.n).flat_map(|i| self.row(i).iter().copied()))
    }

    /// Everything received this step, summed recipient by recipient.
    pub fn total_received(&self) -> f64 {
        exact_sum((0..self.n).flat_map(|j| self.column(j)))
    }
}

/// Correctly rounded sum (Shewchuk's partials with a final half-even fix-up),
/// so the result does not depend on summation order.
pub fn exact_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0;
    for mut x in xs {
        if !x.is_finite() {
            special += x;
            continue;
        }
        let mut kept = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    if special != 0.0 || special.is_nan() {
        return special;
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Index of agent `j` among the recipients of giver `i`.
pub fn recipient_slot(giver: usize, recipient: usize) -> usize {
    debug_assert_ne!(giver, recipient);
    if recipient < giver {
        recipient
    } else {
        recipient - 1
    }
}
