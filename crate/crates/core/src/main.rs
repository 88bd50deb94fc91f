use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use arena::expctl::{self, gradients, ConfigError, ExpError, RunConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_GRADIENT: u8 = 3;

#[derive(Parser)]
#[command(name = "arena", version, about = "Incentivized multi-agent learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over one or more seeds and write its outputs.
    Run {
        /// Config file (`key = value` lines); applied on top of --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in configuration to start from.
        #[arg(long)]
        preset: Option<String>,
        /// Number of consecutive seeds, starting at the config's seed.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against finite differences.
    CheckGradients {
        /// Random draws for the hypergradient suite.
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Rebuild probe.csv from a run directory.
    Probe {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

fn exit_code(err: &ExpError) -> u8 {
    match err {
        ExpError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn build_config(config: Option<PathBuf>, preset: Option<String>) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &preset {
        Some(name) => expctl::preset(name)?,
        None => RunConfig::default(),
    };
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
            cfg.apply_text(&text)?;
        }
        None if preset.is_none() => {
            return Err(ConfigError::Invalid {
                key: "--config".into(),
                msg: "give --config, --preset or both".into(),
            })
        }
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(
    config: Option<PathBuf>,
    preset: Option<String>,
    seeds: usize,
    parallel: usize,
    episodes: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), ExpError> {
    let mut cfg = build_config(config, preset)?;
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let start = Instant::now();
    let outputs = expctl::run_seeds(&cfg, seeds.max(1), parallel.max(1))?;
    expctl::emit_outputs(&outputs, &cfg.out_dir)?;
    for o in &outputs {
        let s = &o.summary;
        println!(
            "{} seed {}: convergence {} final {} adversary_top {}",
            s.preset,
            s.seed,
            s.convergence_episode.map_or("none".into(), |e| e.to_string()),
            s.final_success_rate.map_or("n/a".into(), |r| format!("{r:.3}")),
            s.adversary_top_reward.map_or("n/a".into(), |b| b.to_string()),
        );
    }
    println!(
        "wrote {} in {:.1}s",
        cfg.out_dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config,
            preset,
            seeds,
            parallel,
            episodes,
            out,
        } => match run(config, preset, seeds, parallel, episodes, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Command::CheckGradients { trials } => {
            let start = Instant::now();
            match gradients::run_all(trials) {
                Ok(reports) => {
                    let mut ok = true;
                    for r in &reports {
                        println!(
                            "{:<24} {:>3} draws  worst rel err {:.2e}  worst abs err {:.2e}  max |grad| {:.2e}  (rtol {:.0e})  {}",
                            r.name,
                            r.trials,
                            r.worst_rel_err,
                            r.worst_abs_err,
                            r.grad_scale,
                            r.rtol,
                            if r.passed() { "pass" } else { "FAIL" }
                        );
                        ok &= r.passed();
                    }
                    println!("{:.1}s", start.elapsed().as_secs_f64());
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_GRADIENT)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Probe { input } => match expctl::probe_from_dir(&input) {
            Ok(rows) => {
                print!("{}", expctl::probe_csv(&rows));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Command::Presets => {
            for name in expctl::PRESET_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
