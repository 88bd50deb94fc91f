//! Seeded training runs and their per-episode records.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{EnvKind, RunConfig};
use super::metrics::{self, ProbeSample, CONVERGENCE_THRESHOLD, CONVERGENCE_WINDOW};
use super::ExpError;
use crate::agents::Roster;
use crate::envs::{GameState, Move, Position};
use crate::incentive::exact_sum;
use crate::learner::{lio_iteration, Trajectory};

/// Step-level detail kept for the incentive probe.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    /// `actions[t][agent]`.
    pub actions: Vec<Vec<usize>>,
    /// `received[t][agent]`: total incentive reaching the agent at step `t`.
    pub received: Vec<Vec<f64>>,
}

/// Per-episode metrics, one per training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub episode: usize,
    /// `None` outside the escape room.
    pub success: Option<bool>,
    pub env_return: Vec<f64>,
    /// Undiscounted sum of the reward each agent learns from.
    pub total_return: Vec<f64>,
    pub incentives_given: Vec<f64>,
    pub incentives_received: Vec<f64>,
    pub trace: EpisodeTrace,
}

impl RunRecord {
    fn from_trajectory(episode: usize, traj: &Trajectory, roster: &Roster, success: Option<bool>) -> Self {
        let n = roster.len();
        let per_agent = |f: &dyn Fn(usize) -> Vec<f64>| (0..n).map(|j| exact_sum(f(j))).collect::<Vec<_>>();
        let env_return = per_agent(&|j| traj.env_rewards(j));
        let total_return = per_agent(&|j| traj.total_rewards(j, roster.agents[j].mode));
        let incentives_given = per_agent(&|i| traj.steps.iter().flat_map(|s| s.incentives.row(i).to_vec()).collect());
        let incentives_received = per_agent(&|j| traj.steps.iter().flat_map(|s| s.incentives.column(j)).collect());
        let trace = EpisodeTrace {
            actions: traj.steps.iter().map(|s| s.actions.clone()).collect(),
            received: traj
                .steps
                .iter()
                .map(|s| (0..n).map(|j| exact_sum(s.incentives.column(j))).collect())
                .collect(),
        };
        Self {
            episode,
            success,
            env_return,
            total_return,
            incentives_given,
            incentives_received,
            trace,
        }
    }
}

/// Whole-episode incentive flow seen from the givers' side and from the
/// recipients' side. Both are correctly rounded sums of the same matrix
/// entries, so they agree bit for bit.
pub fn episode_incentive_totals(traj: &Trajectory) -> (f64, f64) {
    let given = exact_sum(traj.steps.iter().flat_map(|s| {
        let n = s.incentives.n();
        (0..n).flat_map(move |i| s.incentives.row(i).to_vec())
    }));
    let received = exact_sum(traj.steps.iter().flat_map(|s| {
        let n = s.incentives.n();
        (0..n).flat_map(move |j| s.incentives.column(j))
    }));
    (given, received)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub preset: String,
    pub seed: u64,
    pub convergence_episode: Option<usize>,
    /// Success rate over the final window in the escape room; mean per-agent
    /// env return over the final window in the prisoner's dilemma.
    pub final_success_rate: Option<f64>,
    /// Whether the first adversary's mean env return over the final window is
    /// strictly the largest. `None` without an adversary.
    pub adversary_top_reward: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
    /// Parameters after the last iteration.
    pub roster: Roster,
}

impl RunOutput {
    pub fn success_series(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.success.unwrap_or(false)).collect()
    }

    /// Probe samples from episodes `from..` (successful ones only in the
    /// escape room). In the escape room an agent's role is where it ended
    /// up on the last step; in the prisoner's dilemma it is its mode.
    pub fn probe_samples(&self, from: usize) -> Vec<ProbeSample> {
        probe_samples(&self.config, &self.records, from)
    }
}

pub fn probe_samples(config: &RunConfig, records: &[RunRecord], from: usize) -> Vec<ProbeSample> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.episode >= from) {
        if r.success == Some(false) {
            continue;
        }
        let Some(last) = r.trace.actions.last() else {
            continue;
        };
        for agent in 0..config.n_agents {
            let role = match config.env {
                EnvKind::EscapeRoom => position_name(last[agent]).to_string(),
                EnvKind::Ipd => config.roster[agent].name().to_string(),
            };
            for (actions, received) in r.trace.actions.iter().zip(&r.trace.received) {
                out.push(ProbeSample {
                    agent,
                    role: role.clone(),
                    action: action_name(config.env, actions[agent]).to_string(),
                    incentive: received[agent],
                });
            }
        }
    }
    out
}

fn position_name(a: usize) -> &'static str {
    match Position::from_index(a) {
        Some(Position::Start) => "start",
        Some(Position::Lever) => "lever",
        Some(Position::Door) => "door",
        None => "?",
    }
}

pub fn action_name(env: EnvKind, a: usize) -> &'static str {
    match env {
        EnvKind::EscapeRoom => position_name(a),
        EnvKind::Ipd => match Move::from_index(a) {
            Some(Move::Cooperate) => "C",
            Some(Move::Defect) => "D",
            None => "?",
        },
    }
}

/// Trains one seeded run for `config.episodes` iterations.
///
/// Each iteration contributes one record: the first episode played with the
/// pre-update parameters.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutput, ExpError> {
    config.validate()?;
    let game = config.game()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut roster = Roster::new(&game, &config.roster, &config.settings(), &mut rng);
    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let out = lio_iteration(&game, &mut roster, &config.hyper, &mut rng)?;
        let traj = &out.old[0];
        let success = match &traj.final_state {
            GameState::EscapeRoom(s) => Some(s.exited),
            GameState::Ipd(_) => None,
        };
        records.push(RunRecord::from_trajectory(episode, traj, &roster, success));
    }
    let summary = summarize(config, &records);
    Ok(RunOutput {
        config: config.clone(),
        records,
        summary,
        roster,
    })
}

pub fn summarize(config: &RunConfig, records: &[RunRecord]) -> RunSummary {
    let window = CONVERGENCE_WINDOW;
    let tail = &records[records.len().saturating_sub(window)..];
    let mean_env = |j: usize| tail.iter().map(|r| r.env_return[j]).sum::<f64>() / tail.len() as f64;
    let (convergence_episode, final_success_rate) = match config.env {
        EnvKind::EscapeRoom => {
            let series: Vec<bool> = records.iter().map(|r| r.success.unwrap_or(false)).collect();
            (
                metrics::convergence_episode(&series, window, CONVERGENCE_THRESHOLD),
                metrics::final_window_rate(&series, window),
            )
        }
        EnvKind::Ipd => (
            None,
            (!tail.is_empty()).then(|| (0..config.n_agents).map(mean_env).sum::<f64>() / config.n_agents as f64),
        ),
    };
    let adversary = config.roster.iter().position(|m| m.is_adversary());
    let adversary_top_reward = match adversary {
        Some(a) if !tail.is_empty() => {
            let top = mean_env(a);
            Some((0..config.n_agents).filter(|&j| j != a).all(|j| top > mean_env(j)))
        }
        _ => None,
    };
    RunSummary {
        preset: config.preset.clone(),
        seed: config.seed,
        convergence_episode,
        final_success_rate,
        adversary_top_reward,
    }
}

/// Runs seeds `config.seed .. config.seed + n_seeds` on up to `parallel`
/// worker threads. Results come back in seed order and equal a sequential
/// run of the same seeds.
pub fn run_seeds(config: &RunConfig, n_seeds: usize, parallel: usize) -> Result<Vec<RunOutput>, ExpError> {
    let configs: Vec<RunConfig> = (0..n_seeds as u64)
        .map(|k| RunConfig {
            seed: config.seed + k,
            ..config.clone()
        })
        .collect();
    if parallel <= 1 {
        return configs.iter().map(run_experiment).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| ExpError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| configs.par_iter().map(run_experiment).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn zero_episodes() {
        let out = run_experiment(&tiny("episodes = 0")).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.convergence_episode, None);
        assert_eq!(out.summary.final_success_rate, None);
    }

    #[test]
    fn records_are_consistent() {
        let out = run_experiment(&tiny("episodes = 30\nagent.1.mode = partial\nseed = 3")).unwrap();
        assert_eq!(out.records.len(), 30);
        for (k, r) in out.records.iter().enumerate() {
            assert_eq!(r.episode, k);
            assert!(r.success.is_some());
            assert_eq!(r.trace.actions.len(), r.trace.received.len());
            // The partial agent learns from env reward alone.
            assert_eq!(r.total_return[1], r.env_return[1]);
        }
        assert!(out.summary.adversary_top_reward.is_some());
    }

    #[test]
    fn ipd_records_have_no_success() {
        let out = run_experiment(&tiny("env = ipd\nepisodes = 5")).unwrap();
        assert!(out.records.iter().all(|r| r.success.is_none()));
        assert_eq!(out.summary.convergence_episode, None);
        let mean = out.summary.final_success_rate.unwrap();
        assert!((-3.0 * 5.0..=0.0).contains(&mean));
    }

    #[test]
    fn parallel_equals_sequential() {
        let cfg = tiny("episodes = 20\nseed = 5");
        let seq = run_seeds(&cfg, 3, 1).unwrap();
        let par = run_seeds(&cfg, 3, 3).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.records, b.records);
            assert_eq!(a.summary, b.summary);
        }
        assert_eq!(seq.iter().map(|o| o.summary.seed).collect::<Vec<_>>(), vec![5, 6, 7]);
    }

    #[test]
    fn probe_roles_follow_final_position() {
        let out = run_experiment(&tiny("episodes = 40\nseed = 1")).unwrap();
        let samples = out.probe_samples(0);
        let successes = out.records.iter().filter(|r| r.success == Some(true)).count();
        let steps: usize = out
            .records
            .iter()
            .filter(|r| r.success == Some(true))
            .map(|r| r.trace.actions.len())
            .sum();
        assert_eq!(samples.len(), 2 * steps);
        if successes > 0 {
            assert!(samples.iter().any(|s| s.role == "door"));
        }
    }
}
