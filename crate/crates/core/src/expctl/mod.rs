//! Experiment control: configuration, presets, seeded runs, metrics and
//! output files.

mod config;
pub mod gradients;
mod metrics;
mod output;
mod presets;
mod runner;

pub use config::{load_config, ConfigError, EnvKind, RunConfig};
pub use metrics::{
    convergence_episode, final_window_rate, incentive_probe, median, pooled_mean, window_rate, ProbeRow, ProbeSample,
    CONVERGENCE_THRESHOLD, CONVERGENCE_WINDOW,
};
pub use output::{
    emit_outputs, episodes_csv, episodes_header, probe_csv, probe_from_dir, probe_start, probe_table, seed_dir,
    summary_csv, svg_line_chart, PROBE_HEADER, STEPS_HEADER, SUMMARY_HEADER,
};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{
    episode_incentive_totals, probe_samples, run_experiment, run_seeds, summarize, EpisodeTrace, RunOutput, RunRecord,
    RunSummary,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::learner::LearnError;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}
