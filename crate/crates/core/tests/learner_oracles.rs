//! Incentive emission, gift cost, the inner policy step and the incentive
//! hypergradient, each checked against an objective rebuilt here from plain
//! loops.

mod common;

use arena::agents::{AgentMode, Roster};
use arena::diffcore::Tape;
use arena::envs::{EscapeRoom, Game, Ipd};
use arena::incentive::gift_cost;
use arena::learner::{generate_trajectory, policy_update, Hyperparams, Trajectory, UpdateGraph};
use common::{jittered_roster, log_softmax, max_rel_err, numeric_grad, ref_incentive, ref_returns, RefNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn policy_ref(roster: &Roster, j: usize) -> RefNet {
    let n = roster.agents[j].policy_net;
    RefNet {
        i: n.input,
        h: n.hidden,
        o: n.output,
    }
}

fn incentive_ref(roster: &Roster, i: usize) -> RefNet {
    let n = roster.agents[i].incentive.as_ref().unwrap().net;
    RefNet {
        i: n.input,
        h: n.hidden,
        o: n.output,
    }
}

fn others(actions: &[usize], me: usize) -> Vec<usize> {
    actions
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != me)
        .map(|(_, &a)| a)
        .collect()
}

/// Slot of `recipient` in the output vector of `giver`.
fn slot(giver: usize, recipient: usize) -> usize {
    if recipient < giver {
        recipient
    } else {
        recipient - 1
    }
}

/// Incentive giver `i` sends to `j` at each step of `traj`, under `eta`.
fn gifts(roster: &Roster, game: &Game, traj: &Trajectory, i: usize, j: usize, eta: &[f64]) -> Vec<f64> {
    let net = incentive_ref(roster, i);
    let r_max = roster.agents[i].incentive.as_ref().unwrap().r_max;
    traj.steps
        .iter()
        .map(|s| {
            ref_incentive(
                &net,
                eta,
                r_max,
                &s.observations[i],
                &others(&s.actions, i),
                game.n_actions(),
            )[slot(i, j)]
        })
        .collect()
}

fn er(n: usize, m: usize) -> Game {
    Game::EscapeRoom(EscapeRoom::new(n, m, 5).unwrap())
}

#[test]
fn recorded_incentives_match_reference_emission() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let game = er(3, 1);
    for _ in 0..10 {
        let roster = jittered_roster(&game, &[AgentMode::LioBenign; 3], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for i in 0..3 {
            let eta = roster.agents[i].incentive.as_ref().unwrap().params.values();
            for j in (0..3).filter(|&j| j != i) {
                for (s, g) in traj.steps.iter().zip(gifts(&roster, &game, &traj, i, j, eta)) {
                    assert!((s.incentives.get(i, j) - g).abs() < 1e-12);
                    assert!(g > 0.0 && g < 3.0);
                }
            }
        }
    }
}

#[test]
fn emission_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let game = er(3, 2);
    for _ in 0..20 {
        let roster = jittered_roster(&game, &[AgentMode::LioBenign; 3], &mut rng);
        let i = rng.gen_range(0..3);
        let f = roster.agents[i].incentive.as_ref().unwrap();
        let obs: Vec<f64> = game.observe(&game.reset(), i).unwrap();
        let acts = vec![rng.gen_range(0..3), rng.gen_range(0..3)];
        let k = rng.gen_range(0..2);
        let mut t = Tape::new();
        let p = t.leaf(f.params.values().to_vec());
        let out = f.compute(&mut t, p, &obs, &acts).unwrap();
        let pick = t.index(out, k).unwrap();
        let analytic = t.backward(pick).unwrap().wrt(p).to_vec();
        let net = incentive_ref(&roster, i);
        let numeric = numeric_grad(
            |e| ref_incentive(&net, e, f.r_max, &obs, &acts, 3)[k],
            f.params.values(),
            STEP,
        );
        assert!(max_rel_err(&analytic, &numeric, 1e-9) <= 1e-5);
    }
}

#[test]
fn gift_cost_matches_reference_value_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let game = er(3, 1);
    let gamma: f64 = 0.95;
    for _ in 0..20 {
        let roster = jittered_roster(&game, &[AgentMode::LioBenign; 3], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        let i = rng.gen_range(0..3);
        let f = roster.agents[i].incentive.as_ref().unwrap();
        let reference = |eta: &[f64]| -> f64 {
            let mut total = 0.0;
            for j in (0..3).filter(|&j| j != i) {
                for (t, g) in gifts(&roster, &game, &traj, i, j, eta).iter().enumerate() {
                    total += gamma.powi(t as i32) * g.abs();
                }
            }
            total
        };
        let mut tape = Tape::new();
        let p = tape.leaf(f.params.values().to_vec());
        let cost = gift_cost(f, p, &traj.gift_inputs(i), gamma, &mut tape).unwrap();
        assert!((tape.scalar(cost) - reference(f.params.values())).abs() < 1e-10);
        let analytic = tape.backward(cost).unwrap().wrt(p).to_vec();
        let numeric = numeric_grad(reference, f.params.values(), STEP);
        assert!(max_rel_err(&analytic, &numeric, 1e-9) <= 1e-5);
    }
}

#[test]
fn policy_step_is_beta_times_return_weighted_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let game = er(2, 1);
    let hp = Hyperparams {
        beta: 0.3,
        gamma: 0.9,
        ..Hyperparams::default()
    };
    for _ in 0..10 {
        let roster = jittered_roster(&game, &[AgentMode::LioBenign; 2], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for j in 0..2 {
            let i = 1 - j;
            let eta = roster.agents[i].incentive.as_ref().unwrap().params.values();
            let rewards: Vec<f64> = traj
                .env_rewards(j)
                .iter()
                .zip(gifts(&roster, &game, &traj, i, j, eta))
                .map(|(r, g)| r + g)
                .collect();
            let g = ref_returns(&rewards, hp.gamma);
            let net = policy_ref(&roster, j);
            let theta = roster.agents[j].policy_params.values();
            let mut expected = theta.to_vec();
            for (s, gt) in traj.steps.iter().zip(&g) {
                let sc = net.score(theta, &s.observations[j], s.actions[j]);
                for (e, v) in expected.iter_mut().zip(sc) {
                    *e += hp.beta * v * gt;
                }
            }
            let got = policy_update(&roster, j, &traj, &hp).unwrap();
            for (a, b) in got.values().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn single_step_update_matches_difference_quotient() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let game = Game::Ipd(Ipd::new(1).unwrap());
    let hp = Hyperparams {
        beta: 0.2,
        ..Hyperparams::default()
    };
    for _ in 0..20 {
        let roster = jittered_roster(&game, &[AgentMode::LioBenign; 2], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        let j = rng.gen_range(0..2);
        let s = &traj.steps[0];
        let g0 = s.env_rewards[j] + s.incentives.get(1 - j, j);
        let net = policy_ref(&roster, j);
        let theta = roster.agents[j].policy_params.values();
        let objective = |p: &[f64]| hp.beta * log_softmax(&net.logits(p, &s.observations[j]))[s.actions[j]] * g0;
        let numeric = numeric_grad(objective, theta, STEP);
        let got = policy_update(&roster, j, &traj, &hp).unwrap();
        let step: Vec<f64> = got.values().iter().zip(theta).map(|(a, b)| a - b).collect();
        assert!(max_rel_err(&step, &numeric, 1e-9) <= 1e-5);
    }
}

/// Giver `i`'s outer objective with both episodes frozen, rebuilt without the
/// library's update machinery: the recipient's one-step REINFORCE update on
/// `old` (a function of `eta` through the gifts), then the log-likelihood of
/// `new` under the updated policy weighted by the giver's env return, minus
/// the discounted gift cost on `old`.
fn outer_reference(
    roster: &Roster,
    game: &Game,
    i: usize,
    eta: &[f64],
    old: &Trajectory,
    new: &Trajectory,
    hp: &Hyperparams,
) -> f64 {
    let j = 1 - i;
    let net = policy_ref(roster, j);
    let theta = roster.agents[j].policy_params.values();
    let my_gifts = gifts(roster, game, old, i, j, eta);
    let rewards: Vec<f64> = old.env_rewards(j).iter().zip(&my_gifts).map(|(r, g)| r + g).collect();
    let g = ref_returns(&rewards, hp.gamma);
    let mut theta_hat = theta.to_vec();
    for (s, gt) in old.steps.iter().zip(&g) {
        for (p, v) in theta_hat
            .iter_mut()
            .zip(net.score(theta, &s.observations[j], s.actions[j]))
        {
            *p += hp.beta * v * gt;
        }
    }
    let giver_returns = ref_returns(&new.env_rewards(i), hp.gamma);
    let likelihood: f64 = new
        .steps
        .iter()
        .zip(&giver_returns)
        .map(|(s, gt)| log_softmax(&net.logits(&theta_hat, &s.observations[j]))[s.actions[j]] * gt)
        .sum();
    let cost: f64 = my_gifts
        .iter()
        .enumerate()
        .map(|(t, v)| hp.gamma.powi(t as i32) * v.abs())
        .sum();
    likelihood - hp.alpha * cost
}

fn hypergradient_case(game: &Game, rng: &mut ChaCha8Rng) -> f64 {
    let hp = Hyperparams {
        beta: rng.gen_range(0.05..0.5),
        alpha: rng.gen_range(0.0..0.5),
        ..Hyperparams::default()
    };
    let roster = jittered_roster(game, &[AgentMode::LioBenign; 2], rng);
    let old = generate_trajectory(game, &roster, rng).unwrap();
    let mut graph = UpdateGraph::record(&roster, std::slice::from_ref(&old), &hp).unwrap();
    let mut updated = roster.clone();
    for a in updated.agents.iter_mut() {
        a.policy_params = graph.theta_hat(&roster, a.index).unwrap();
    }
    let new = generate_trajectory(game, &updated, rng).unwrap();
    let i = rng.gen_range(0..2);
    let analytic = graph
        .hypergradient(
            &roster,
            i,
            std::slice::from_ref(&old),
            std::slice::from_ref(&new),
            &updated,
            &hp,
        )
        .unwrap();
    let eta = roster.agents[i].incentive.as_ref().unwrap().params.values().to_vec();
    let numeric = numeric_grad(|e| outer_reference(&roster, game, i, e, &old, &new, &hp), &eta, STEP);
    max_rel_err(&analytic, &numeric, 1e-8)
}

#[test]
fn hypergradient_matches_common_random_number_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let game = Game::Ipd(Ipd::new(1).unwrap());
    let worst = (0..50).map(|_| hypergradient_case(&game, &mut rng)).fold(0.0, f64::max);
    assert!(worst <= 1e-4, "worst rel err {worst:e}");
}

#[test]
fn hypergradient_matches_on_multi_step_episodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for game in [Game::Ipd(Ipd::new(4).unwrap()), er(2, 1)] {
        let worst = (0..10).map(|_| hypergradient_case(&game, &mut rng)).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "worst rel err {worst:e}");
    }
}
