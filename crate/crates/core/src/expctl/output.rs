//! CSV and SVG emission, and reading stored step records back for the probe.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.txt            every setting, defaults included
//! summary.csv           one row per seed
//! probe.csv             incentive-per-action table over converged episodes
//! seed_<k>/episodes.csv per-episode records
//! seed_<k>/steps.csv    per-step actions and received incentives
//! seed_<k>/*.svg        line charts of the smoothed metric series
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{EnvKind, RunConfig};
use super::metrics::{incentive_probe, ProbeRow, CONVERGENCE_WINDOW};
use super::runner::{probe_samples, EpisodeTrace, RunOutput, RunRecord, RunSummary};
use super::ExpError;

/// Episodes averaged per point in the charts.
const CHART_SMOOTHING: usize = 100;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExpError + '_ {
    move |source| ExpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExpError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// 17 significant digits.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn episodes_header(n: usize) -> String {
    let mut cols = vec!["episode".to_string(), "success".to_string()];
    for prefix in ["env_return", "total_return", "inc_given", "inc_recv"] {
        cols.extend((0..n).map(|j| format!("{prefix}_{j}")));
    }
    cols.join(",")
}

pub fn episodes_csv(records: &[RunRecord], n: usize) -> String {
    let mut s = episodes_header(n);
    s.push('\n');
    for r in records {
        let success = match r.success {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = write!(s, "{},{}", r.episode, success);
        for v in r
            .env_return
            .iter()
            .chain(&r.total_return)
            .chain(&r.incentives_given)
            .chain(&r.incentives_received)
        {
            let _ = write!(s, ",{}", real(*v));
        }
        s.push('\n');
    }
    s
}

pub const STEPS_HEADER: &str = "episode,step,agent,action,incentive_received";

pub fn steps_csv(records: &[RunRecord]) -> String {
    let mut s = String::from(STEPS_HEADER);
    s.push('\n');
    for r in records {
        for (t, (actions, received)) in r.trace.actions.iter().zip(&r.trace.received).enumerate() {
            for (j, (a, v)) in actions.iter().zip(received).enumerate() {
                let _ = writeln!(s, "{},{t},{j},{a},{}", r.episode, real(*v));
            }
        }
    }
    s
}

pub const SUMMARY_HEADER: &str = "preset,seed,convergence_episode,final_success_rate,adversary_top_reward";

pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.preset,
            r.seed,
            r.convergence_episode.map(|e| e.to_string()).unwrap_or_default(),
            r.final_success_rate.map(real).unwrap_or_default(),
            r.adversary_top_reward.map(|b| b.to_string()).unwrap_or_default(),
        );
    }
    s
}

pub const PROBE_HEADER: &str = "agent,role,action,mean_incentive_received,count";

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from(PROBE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.agent,
            r.role,
            r.action,
            real(r.mean_incentive_received),
            r.count
        );
    }
    s
}

/// First episode of the converged regime: the convergence episode if the
/// run converged, otherwise the start of the final window.
pub fn probe_start(summary: &RunSummary, n_records: usize) -> usize {
    summary
        .convergence_episode
        .unwrap_or(n_records.saturating_sub(CONVERGENCE_WINDOW))
}

/// Probe table pooled over several runs of the same configuration.
pub fn probe_table(outputs: &[RunOutput]) -> Vec<ProbeRow> {
    let samples: Vec<_> = outputs
        .iter()
        .flat_map(|o| o.probe_samples(probe_start(&o.summary, o.records.len())))
        .collect();
    incentive_probe(&samples)
}

fn trailing_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// Minimal SVG line chart, one polyline per series.
pub fn svg_line_chart(title: &str, x_label: &str, series: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let finite = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{x_label}</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">{hi:.3}</text>"#, PAD);
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">{lo:.3}</text>"#, H - PAD);
    for (k, (name, values)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| {
                let x = PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
                let y = H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            W - PAD - 90.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn charts(out: &RunOutput) -> Vec<(&'static str, String)> {
    let n = out.config.n_agents;
    let x_label = format!("episode (x{CHART_SMOOTHING})");
    let per_agent = |f: &dyn Fn(&RunRecord) -> &Vec<f64>| -> Vec<(String, Vec<f64>)> {
        (0..n)
            .map(|j| {
                let v: Vec<f64> = out.records.iter().map(|r| f(r)[j]).collect();
                (format!("agent {j}"), trailing_means(&v, CHART_SMOOTHING))
            })
            .collect()
    };
    let mut files = Vec::new();
    if out.config.env == EnvKind::EscapeRoom {
        let s: Vec<f64> = out
            .records
            .iter()
            .map(|r| r.success.unwrap_or(false) as u8 as f64)
            .collect();
        files.push((
            "success_rate.svg",
            svg_line_chart(
                "success rate",
                &x_label,
                &[("success".into(), trailing_means(&s, CHART_SMOOTHING))],
            ),
        ));
    }
    files.push((
        "env_return.svg",
        svg_line_chart("env return", &x_label, &per_agent(&|r| &r.env_return)),
    ));
    files.push((
        "incentives_received.svg",
        svg_line_chart("incentives received", &x_label, &per_agent(&|r| &r.incentives_received)),
    ));
    files
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

/// Writes every output file for runs of one configuration.
pub fn emit_outputs(outputs: &[RunOutput], out_dir: &Path) -> Result<(), ExpError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if let Some(first) = outputs.first() {
        write_file(&out_dir.join("config.txt"), &first.config.to_text())?;
    }
    for o in outputs {
        let dir = seed_dir(out_dir, o.config.seed);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_file(&dir.join("episodes.csv"), &episodes_csv(&o.records, o.config.n_agents))?;
        write_file(&dir.join("steps.csv"), &steps_csv(&o.records))?;
        for (name, svg) in charts(o) {
            write_file(&dir.join(name), &svg)?;
        }
    }
    let summaries: Vec<RunSummary> = outputs.iter().map(|o| o.summary.clone()).collect();
    write_file(&out_dir.join("summary.csv"), &summary_csv(&summaries))?;
    write_file(&out_dir.join("probe.csv"), &probe_csv(&probe_table(outputs)))?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: &str) -> ExpError {
    ExpError::Runtime(format!("{}:{line}: {msg}", path.display()))
}

fn read(path: &Path) -> Result<String, ExpError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Rebuilds the probe table from a directory written by [`emit_outputs`]
/// and stores it as `probe.csv` in the same directory.
pub fn probe_from_dir(dir: &Path) -> Result<Vec<ProbeRow>, ExpError> {
    let config = RunConfig::parse(&read(&dir.join("config.txt"))?)?;
    let summary_path = dir.join("summary.csv");
    let summary_text = read(&summary_path)?;
    let mut samples = Vec::new();
    for (k, line) in summary_text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(&summary_path, k + 1, "expected 5 columns"));
        }
        let seed: u64 = cols[1]
            .parse()
            .map_err(|_| parse_err(&summary_path, k + 1, "bad seed"))?;
        let convergence_episode = match cols[2] {
            "" => None,
            v => Some(
                v.parse()
                    .map_err(|_| parse_err(&summary_path, k + 1, "bad convergence episode"))?,
            ),
        };
        let records = read_records(&seed_dir(dir, seed))?;
        let summary = RunSummary {
            preset: cols[0].to_string(),
            seed,
            convergence_episode,
            final_success_rate: None,
            adversary_top_reward: None,
        };
        samples.extend(probe_samples(&config, &records, probe_start(&summary, records.len())));
    }
    let rows = incentive_probe(&samples);
    write_file(&dir.join("probe.csv"), &probe_csv(&rows))?;
    Ok(rows)
}

/// Reads the success column and per-step traces of one seed directory.
/// Return columns are not needed by the probe and are left empty.
fn read_records(dir: &Path) -> Result<Vec<RunRecord>, ExpError> {
    let ep_path = dir.join("episodes.csv");
    let mut records: Vec<RunRecord> = Vec::new();
    for (k, line) in read(&ep_path)?.lines().enumerate().skip(1) {
        let mut cols = line.split(',');
        let episode: usize = cols
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(&ep_path, k + 1, "bad episode"))?;
        let success = match cols.next() {
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some("") => None,
            _ => return Err(parse_err(&ep_path, k + 1, "bad success")),
        };
        if episode != records.len() {
            return Err(parse_err(&ep_path, k + 1, "episodes out of order"));
        }
        records.push(RunRecord {
            episode,
            success,
            env_return: vec![],
            total_return: vec![],
            incentives_given: vec![],
            incentives_received: vec![],
            trace: EpisodeTrace {
                actions: vec![],
                received: vec![],
            },
        });
    }
    let steps_path = dir.join("steps.csv");
    for (k, line) in read(&steps_path)?.lines().enumerate().skip(1) {
        let bad = || parse_err(&steps_path, k + 1, "bad step row");
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        let episode: usize = cols[0].parse().map_err(|_| bad())?;
        let step: usize = cols[1].parse().map_err(|_| bad())?;
        let agent: usize = cols[2].parse().map_err(|_| bad())?;
        let action: usize = cols[3].parse().map_err(|_| bad())?;
        let value: f64 = cols[4].parse().map_err(|_| bad())?;
        let trace = &mut records.get_mut(episode).ok_or_else(bad)?.trace;
        if step == trace.actions.len() && agent == 0 {
            trace.actions.push(vec![]);
            trace.received.push(vec![]);
        }
        if step + 1 != trace.actions.len() || agent != trace.actions[step].len() {
            return Err(bad());
        }
        trace.actions[step].push(action);
        trace.received[step].push(value);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expctl::runner::run_seeds;

    #[test]
    fn header_matches_schema() {
        assert_eq!(
            episodes_header(2),
            "episode,success,env_return_0,env_return_1,total_return_0,total_return_1,inc_given_0,inc_given_1,inc_recv_0,inc_recv_1"
        );
    }

    #[test]
    fn reals_have_seventeen_digits() {
        assert_eq!(real(-1.0), "-1.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn outputs_are_deterministic_and_probe_round_trips() {
        let cfg = RunConfig::parse("episodes = 60\nseed = 2").unwrap();
        let runs = run_seeds(&cfg, 2, 1).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_outputs(&runs, a.path()).unwrap();
        emit_outputs(&runs, b.path()).unwrap();
        emit_outputs(&run_seeds(&cfg, 2, 2).unwrap(), b.path()).unwrap();
        for f in [
            "summary.csv",
            "probe.csv",
            "config.txt",
            "seed_2/episodes.csv",
            "seed_3/steps.csv",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3);
        let direct = probe_table(&runs);
        let reread = probe_from_dir(a.path()).unwrap();
        assert_eq!(direct, reread);
        assert!(a.path().join("seed_3/success_rate.svg").exists());
    }

    #[test]
    fn missing_directory_names_the_path() {
        let err = probe_from_dir(Path::new("/nonexistent/arena")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/arena"), "{err}");
    }

    #[test]
    fn chart_is_well_formed() {
        let svg = svg_line_chart("t", "x", &[("a".into(), vec![0.0, 1.0, 0.5])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let flat = svg_line_chart("t", "x", &[("a".into(), vec![2.0; 4])]);
        assert!(!flat.contains("NaN"));
    }
}
