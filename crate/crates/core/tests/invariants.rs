//! Property tests over random rosters, modes and episodes.

mod common;

use arena::agents::{assemble_total_reward, AgentMode, Roster};
use arena::envs::{EscapeRoom, Game, Ipd};
use arena::expctl::{episode_incentive_totals, preset, run_experiment};
use arena::learner::{generate_trajectory, returns, Hyperparams, UpdateGraph};
use common::jittered_roster;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mode_strategy() -> impl Strategy<Value = AgentMode> {
    prop_oneof![
        Just(AgentMode::LioBenign),
        Just(AgentMode::PurePg),
        Just(AgentMode::PartialComm),
        (1.0f64..100.0).prop_map(|c_adv| AgentMode::FakeIncentive { c_adv }),
        Just(AgentMode::Bypass),
        Just(AgentMode::Reverse),
    ]
}

fn room_strategy() -> impl Strategy<Value = (usize, usize)> {
    (2usize..5).prop_flat_map(|n| (Just(n), 1..n))
}

fn hp(beta: f64) -> Hyperparams {
    Hyperparams {
        beta,
        ..Hyperparams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every gift matrix conserves the total: what is given equals what is
    /// received, bit for bit, per step and per episode.
    #[test]
    fn incentives_are_conserved(
        (n, m) in room_strategy(),
        modes in prop::collection::vec(mode_strategy(), 4),
        seed in any::<u64>(),
    ) {
        let game = Game::EscapeRoom(EscapeRoom::new(n, m, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roster = jittered_roster(&game, &modes[..n], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for s in &traj.steps {
            prop_assert_eq!(s.incentives.total_given().to_bits(), s.incentives.total_received().to_bits());
            for i in 0..n {
                prop_assert_eq!(s.incentives.get(i, i), 0.0);
            }
        }
        let (given, received) = episode_incentive_totals(&traj);
        prop_assert_eq!(given.to_bits(), received.to_bits());
    }

    /// The learning reward is the env reward plus each incoming gift, added
    /// term by term in giver order, for modes that accept gifts.
    #[test]
    fn total_reward_is_termwise_sum(
        (n, m) in room_strategy(),
        modes in prop::collection::vec(mode_strategy(), 4),
        seed in any::<u64>(),
    ) {
        let game = Game::EscapeRoom(EscapeRoom::new(n, m, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roster = jittered_roster(&game, &modes[..n], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for j in 0..n {
            let mode = roster.agents[j].mode;
            let totals = traj.total_rewards(j, mode);
            for (s, total) in traj.steps.iter().zip(&totals) {
                let mut expected = s.env_rewards[j];
                if !matches!(mode, AgentMode::PartialComm | AgentMode::FakeIncentive { .. }) {
                    for i in (0..n).filter(|&i| i != j) {
                        expected += s.incentives.get(i, j);
                    }
                }
                prop_assert_eq!(total.to_bits(), expected.to_bits());
                prop_assert_eq!(
                    assemble_total_reward(mode, s.env_rewards[j], &s.incentives.incoming(j)).to_bits(),
                    expected.to_bits()
                );
            }
        }
    }

    /// A partial-communication agent's update ignores what others send it:
    /// rescaling every other agent's incentive parameters leaves it unchanged.
    #[test]
    fn partial_agent_update_ignores_incoming_gifts(seed in any::<u64>(), k in 0.1f64..3.0) {
        let game = Game::EscapeRoom(EscapeRoom::new(3, 1, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = [AgentMode::LioBenign, AgentMode::LioBenign, AgentMode::PartialComm];
        let roster = jittered_roster(&game, &modes, &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        let mut other = roster.clone();
        for a in other.agents.iter_mut().take(2) {
            let f = a.incentive.as_mut().unwrap();
            let v: Vec<f64> = f.params.values().iter().map(|x| x * k + 0.3).collect();
            f.params = f.params.with_values(v).unwrap();
        }
        let h = hp(0.1);
        let a = UpdateGraph::record(&roster, std::slice::from_ref(&traj), &h).unwrap();
        let b = UpdateGraph::record(&other, std::slice::from_ref(&traj), &h).unwrap();
        let ta = a.theta_hat(&roster, 2).unwrap();
        let tb = b.theta_hat(&other, 2).unwrap();
        prop_assert!(ta.values().iter().zip(tb.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    /// Flipping an agent to reverse mode negates its update step exactly.
    #[test]
    fn reverse_step_is_negated_benign_step(seed in any::<u64>(), beta in 0.0f64..1.0) {
        let game = Game::EscapeRoom(EscapeRoom::new(2, 1, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roster = jittered_roster(&game, &[AgentMode::LioBenign, AgentMode::Reverse], &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        let mut benign = roster.clone();
        benign.agents[1].mode = AgentMode::LioBenign;
        let h = hp(beta);
        let rev = UpdateGraph::record(&roster, std::slice::from_ref(&traj), &h).unwrap();
        let ben = UpdateGraph::record(&benign, std::slice::from_ref(&traj), &h).unwrap();
        for (r, b) in rev.update_step(1).unwrap().iter().zip(ben.update_step(1).unwrap()) {
            prop_assert_eq!(r.to_bits(), (-b).to_bits());
        }
    }

    /// With zero returns on every step the policy does not move.
    #[test]
    fn zero_returns_leave_policy_fixed(seed in any::<u64>(), len in 1usize..6) {
        let game = Game::Ipd(Ipd::new(len).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roster = jittered_roster(&game, &[AgentMode::PurePg; 2], &mut rng);
        let mut traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for s in traj.steps.iter_mut() {
            s.env_rewards.iter_mut().for_each(|r| *r = 0.0);
        }
        let g = UpdateGraph::record(&roster, std::slice::from_ref(&traj), &hp(0.5)).unwrap();
        for j in 0..2 {
            prop_assert_eq!(g.theta_hat(&roster, j).unwrap(), roster.agents[j].policy_params.clone());
        }
    }

    /// `G_t = r_t + gamma * G_{t+1}` with `G` of the last step equal to its reward.
    #[test]
    fn returns_follow_the_backward_recursion(
        rewards in prop::collection::vec(-10.0f64..10.0, 1..20),
        gamma in 0.0f64..1.0,
    ) {
        let g = returns(&rewards, gamma);
        let last = rewards.len() - 1;
        prop_assert_eq!(g[last], rewards[last]);
        for t in 0..last {
            prop_assert_eq!(g[t].to_bits(), (rewards[t] + gamma * g[t + 1]).to_bits());
        }
        let direct: f64 = rewards.iter().enumerate().map(|(t, r)| gamma.powi(t as i32) * r).sum();
        prop_assert!((g[0] - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    /// A bypass agent never leaves its start position in the escape room.
    #[test]
    fn bypass_agent_stays_put((n, m) in room_strategy(), seed in any::<u64>()) {
        let game = Game::EscapeRoom(EscapeRoom::new(n, m, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = vec![AgentMode::LioBenign; n];
        modes[n - 1] = AgentMode::Bypass;
        let roster: Roster = jittered_roster(&game, &modes, &mut rng);
        let traj = generate_trajectory(&game, &roster, &mut rng).unwrap();
        for s in &traj.steps {
            prop_assert_eq!(s.env_rewards[n - 1], 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Identical configuration and seed give identical runs.
    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), name in prop::sample::select(vec!["er2_lio", "er42_partial", "ipd_lio", "er2_reverse"])) {
        let mut cfg = preset(name).unwrap();
        cfg.seed = seed;
        cfg.episodes = 40;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(&a.summary, &b.summary);
        prop_assert_eq!(&a.roster, &b.roster);
    }
}
