//! Finite-difference suites behind `arena check-gradients`.
//!
//! Each suite draws random parameters, computes an analytic gradient with the
//! tape and compares it against central differences of an independent
//! off-tape evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{AgentMode, AgentSettings, Roster};
use crate::diffcore::{finite_diff_check, log_softmax, FdReport, Tape};
use crate::envs::{EscapeRoom, Game, Ipd};
use crate::incentive::{discounted_l1, gift_cost};
use crate::learner::{generate_trajectory, returns, score, Hyperparams, LearnError, Trajectory, UpdateGraph};

/// Central-difference step shared by every suite.
pub const FD_STEP: f64 = 1e-5;
pub const POLICY_RTOL: f64 = 1e-5;
pub const GIFT_RTOL: f64 = 1e-5;
pub const HYPER_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub worst_rel_err: f64,
    pub worst_abs_err: f64,
    /// Largest analytic gradient entry seen, for scale.
    pub grad_scale: f64,
    pub rtol: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// The two-agent, one-round prisoner's dilemma used by the hypergradient
/// suite.
pub fn toy_game() -> Game {
    Game::Ipd(Ipd::new(1).expect("valid length"))
}

fn random_roster(game: &Game, modes: &[AgentMode], rng: &mut ChaCha8Rng) -> Roster {
    let mut roster = Roster::new(game, modes, &AgentSettings::default(), rng);
    // Spread the draws beyond the default initialisation scale.
    for a in roster.agents.iter_mut() {
        let noise: Vec<f64> = (0..a.policy_params.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        a.policy_params = a.policy_params.axpy(1.0, &noise).expect("same length");
        if let Some(f) = a.incentive.as_mut() {
            let noise: Vec<f64> = (0..f.params.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            f.params = f.params.axpy(1.0, &noise).expect("same length");
        }
    }
    roster
}

/// Per-draw `(relative error, absolute error, largest analytic entry)`.
type Draw = (f64, f64, f64);

fn draw(report: &FdReport, analytic: &[f64]) -> Draw {
    let scale = analytic.iter().map(|g| g.abs()).fold(0.0, f64::max);
    (report.max_rel_err, report.max_abs_err, scale)
}

fn fold(name: &'static str, rtol: f64, draws: &[Draw]) -> SuiteReport {
    let max = |f: fn(&Draw) -> f64| {
        draws
            .iter()
            .map(f)
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    };
    SuiteReport {
        name,
        trials: draws.len(),
        failures: draws.iter().filter(|d| !(d.0 <= rtol)).count(),
        worst_rel_err: max(|d| d.0),
        worst_abs_err: max(|d| d.1),
        grad_scale: max(|d| d.2),
        rtol,
    }
}

/// `grad log pi(a | o)` against differences of the off-tape log-probability.
pub fn policy_gradient_suite(trials: usize, seed: u64) -> Result<SuiteReport, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = Game::EscapeRoom(EscapeRoom::new(3, 1, 5).expect("valid room"));
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let roster = random_roster(&game, &[AgentMode::LioBenign; 3], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng)?;
        let agent = &roster.agents[rng.gen_range(0..3)];
        let step = &traj.steps[rng.gen_range(0..traj.len())];
        let (obs, action) = (&step.observations[agent.index], step.actions[agent.index]);
        let analytic = score(agent, agent.policy_params.values(), obs, action)?;
        let f = |p: &[f64]| log_softmax(&agent.policy_net.forward_values(p, obs).expect("shape"))[action];
        let report = finite_diff_check(f, agent.policy_params.values(), &analytic, FD_STEP, POLICY_RTOL);
        errs.push(draw(&report, &analytic));
    }
    Ok(fold("policy gradient", POLICY_RTOL, &errs))
}

/// Gradient of the discounted L1 gift cost with respect to the incentive
/// parameters.
pub fn gift_cost_suite(trials: usize, seed: u64) -> Result<SuiteReport, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = Game::EscapeRoom(EscapeRoom::new(3, 1, 5).expect("valid room"));
    let gamma = 0.99;
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let roster = random_roster(&game, &[AgentMode::LioBenign; 3], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng)?;
        let giver = rng.gen_range(0..3);
        let f = roster.agents[giver].incentive.as_ref().expect("learned channel");
        let inputs = traj.gift_inputs(giver);
        let mut tape = Tape::new();
        let p = tape.leaf(f.params.values().to_vec());
        let cost = gift_cost(f, p, &inputs, gamma, &mut tape)?;
        let analytic = tape.backward(cost)?.wrt(p).to_vec();
        let off_tape = |eta: &[f64]| {
            let emitted: Vec<Vec<f64>> = inputs
                .iter()
                .map(|g| f.emit_with(eta, g.obs, &g.actions_others).expect("shape"))
                .collect();
            discounted_l1(&emitted, gamma)
        };
        let report = finite_diff_check(off_tape, f.params.values(), &analytic, FD_STEP, GIFT_RTOL);
        errs.push(draw(&report, &analytic));
    }
    Ok(fold("gift cost", GIFT_RTOL, &errs))
}

/// The giver's outer objective as an explicit function of its incentive
/// parameters, with both batches frozen:
///
/// `sum_j sum_t log pi_{theta_hat_j(eta)}(a_j,t | o_j,t) * G_giver,t` on the new
/// batch, minus `alpha` times the gift cost on the old batch. The inner
/// update is re-recorded for every evaluation.
pub fn outer_objective(
    roster: &Roster,
    giver: usize,
    eta: &[f64],
    old: &[Trajectory],
    new: &[Trajectory],
    hp: &Hyperparams,
) -> f64 {
    let mut r = roster.clone();
    let f = r.agents[giver].incentive.as_mut().expect("learned channel");
    f.params = f.params.with_values(eta.to_vec()).expect("same length");
    let graph = UpdateGraph::record(&r, old, hp).expect("valid batch");
    let mut total = 0.0;
    for j in 0..r.len() {
        if j == giver || !r.agents[j].mode.learns_from_incentives() {
            continue;
        }
        let theta = graph.theta_hat(&r, j).expect("trainable recipient");
        for traj in new {
            let g = returns(&traj.env_rewards(giver), hp.gamma);
            for (s, gt) in traj.steps.iter().zip(g) {
                let z = r.agents[j]
                    .policy_net
                    .forward_values(theta.values(), &s.observations[j])
                    .expect("shape");
                total += log_softmax(&z)[s.actions[j]] * gt / new.len() as f64;
            }
        }
    }
    let f = r.agents[giver].incentive.as_ref().expect("learned channel");
    let cost: f64 = old
        .iter()
        .map(|traj| {
            let emitted: Vec<Vec<f64>> = traj
                .gift_inputs(giver)
                .iter()
                .map(|g| f.emit(g.obs, &g.actions_others).expect("shape"))
                .collect();
            discounted_l1(&emitted, hp.gamma)
        })
        .sum();
    total - hp.alpha * cost / old.len() as f64
}

/// Hypergradient against differences of [`outer_objective`], with the
/// sampled episodes held fixed (common random numbers).
pub fn hypergradient_suite(trials: usize, seed: u64) -> Result<SuiteReport, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = toy_game();
    let mut errs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let hp = Hyperparams {
            beta: rng.gen_range(0.05..0.5),
            alpha: rng.gen_range(0.0..0.5),
            ..Hyperparams::default()
        };
        let roster = random_roster(&game, &[AgentMode::LioBenign; 2], &mut rng);
        let old = vec![generate_trajectory(&game, &roster, &mut rng)?];
        let mut graph = UpdateGraph::record(&roster, &old, &hp)?;
        let mut updated = roster.clone();
        for a in updated.agents.iter_mut() {
            if let Some(p) = graph.theta_hat(&roster, a.index) {
                a.policy_params = p;
            }
        }
        let new = vec![generate_trajectory(&game, &updated, &mut rng)?];
        let giver = rng.gen_range(0..2);
        let analytic = graph.hypergradient(&roster, giver, &old, &new, &updated, &hp)?;
        let eta = roster.agents[giver]
            .incentive
            .as_ref()
            .expect("learned channel")
            .params
            .values()
            .to_vec();
        let objective = |e: &[f64]| outer_objective(&roster, giver, e, &old, &new, &hp);
        let report = finite_diff_check(objective, &eta, &analytic, FD_STEP, HYPER_RTOL);
        errs.push(draw(&report, &analytic));
    }
    Ok(fold("incentive hypergradient", HYPER_RTOL, &errs))
}

/// All three suites; `trials` applies to the hypergradient suite, the others
/// run a fixed 20 draws.
pub fn run_all(trials: usize) -> Result<Vec<SuiteReport>, LearnError> {
    Ok(vec![
        policy_gradient_suite(20, 11)?,
        gift_cost_suite(20, 12)?,
        hypergradient_suite(trials, 13)?,
    ])
}
