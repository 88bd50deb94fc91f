//! Success-rate windows, convergence detection and the incentive-per-action
//! probe.

use std::collections::BTreeMap;

/// Trailing window used for convergence and final success rates.
pub const CONVERGENCE_WINDOW: usize = 1000;
pub const CONVERGENCE_THRESHOLD: f64 = 0.95;

/// Smallest episode `e >= window - 1` whose trailing window `[e - window + 1, e]`
/// has a success rate of at least `threshold`.
pub fn convergence_episode(series: &[bool], window: usize, threshold: f64) -> Option<usize> {
    assert!(window >= 1, "window must be at least 1");
    if series.len() < window {
        return None;
    }
    let mut count = series[..window].iter().filter(|&&s| s).count();
    let reached = |count: usize| count as f64 / window as f64 >= threshold;
    if reached(count) {
        return Some(window - 1);
    }
    for e in window..series.len() {
        count += series[e] as usize;
        count -= series[e - window] as usize;
        if reached(count) {
            return Some(e);
        }
    }
    None
}

/// Success rate over the last `window` episodes (or all of them if fewer).
/// `None` for an empty series.
pub fn final_window_rate(series: &[bool], window: usize) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let tail = &series[series.len().saturating_sub(window)..];
    Some(tail.iter().filter(|&&s| s).count() as f64 / tail.len() as f64)
}

/// Success rate over episodes `[from, to)`, clipped to the series.
pub fn window_rate(series: &[bool], from: usize, to: usize) -> Option<f64> {
    let to = to.min(series.len());
    if from >= to {
        return None;
    }
    let part = &series[from..to];
    Some(part.iter().filter(|&&s| s).count() as f64 / part.len() as f64)
}

/// One observation for the probe: what `agent`, playing `role` in its
/// episode, received on a step where it took `action`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub agent: usize,
    pub role: String,
    pub action: String,
    pub incentive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub agent: usize,
    pub role: String,
    pub action: String,
    pub mean_incentive_received: f64,
    pub count: usize,
}

/// Mean incentive received per `(agent, role, action)`, sorted by key.
pub fn incentive_probe<'a, I>(samples: I) -> Vec<ProbeRow>
where
    I: IntoIterator<Item = &'a ProbeSample>,
{
    let mut acc: BTreeMap<(usize, &str, &str), (f64, usize)> = BTreeMap::new();
    for s in samples {
        let e = acc
            .entry((s.agent, s.role.as_str(), s.action.as_str()))
            .or_insert((0.0, 0));
        e.0 += s.incentive;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((agent, role, action), (sum, count))| ProbeRow {
            agent,
            role: role.to_string(),
            action: action.to_string(),
            mean_incentive_received: sum / count as f64,
            count,
        })
        .collect()
}

/// Pools probe rows matching `pred` into one count-weighted mean.
pub fn pooled_mean<F: Fn(&ProbeRow) -> bool>(rows: &[ProbeRow], pred: F) -> Option<f64> {
    let (sum, count) = rows.iter().filter(|r| pred(r)).fold((0.0, 0usize), |(s, c), r| {
        (s + r.mean_incentive_received * r.count as f64, c + r.count)
    });
    (count > 0).then(|| sum / count as f64)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn convergence_examples() {
        let mut s = vec![false; 100];
        s.extend(vec![true; 50]);
        assert_eq!(convergence_episode(&s, 10, 0.95), Some(109));
        assert_eq!(convergence_episode(&[false; 40], 10, 0.95), None);
        assert_eq!(convergence_episode(&[true; 12], 5, 0.95), Some(4));
        assert_eq!(convergence_episode(&[true; 3], 5, 0.5), None);
    }

    #[test]
    fn threshold_below_one_tolerates_failures() {
        // 19 of 20 successes clears 0.95.
        let mut s = vec![true; 20];
        s[3] = false;
        assert_eq!(convergence_episode(&s, 20, 0.95), Some(19));
        assert_eq!(convergence_episode(&s, 20, 1.0), None);
    }

    #[test]
    fn rates() {
        let s = [true, false, true, true];
        assert_eq!(final_window_rate(&s, 2), Some(1.0));
        assert_eq!(final_window_rate(&s, 10), Some(0.75));
        assert_eq!(final_window_rate(&[], 10), None);
        assert_eq!(window_rate(&s, 1, 3), Some(0.5));
        assert_eq!(window_rate(&s, 3, 100), Some(1.0));
        assert_eq!(window_rate(&s, 4, 100), None);
    }

    #[test]
    fn probe_groups_and_averages() {
        assert!(incentive_probe(&[]).is_empty());
        let mk = |agent, role: &str, action: &str, incentive| ProbeSample {
            agent,
            role: role.into(),
            action: action.into(),
            incentive,
        };
        let samples = vec![
            mk(1, "lever", "lever", 1.0),
            mk(1, "lever", "lever", 0.5),
            mk(0, "door", "door", 0.0),
            mk(1, "lever", "start", 2.0),
        ];
        let rows = incentive_probe(&samples);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].agent, rows[0].role.as_str()), (0, "door"));
        assert_eq!(rows[1].action, "lever");
        assert_eq!(rows[1].mean_incentive_received, 0.75);
        assert_eq!(rows[1].count, 2);
        assert_eq!(pooled_mean(&rows, |r| r.role == "lever"), Some(3.5 / 3.0));
        assert_eq!(pooled_mean(&rows, |r| r.role == "none"), None);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    proptest! {
        #[test]
        fn raising_threshold_never_converges_earlier(
            series in proptest::collection::vec(any::<bool>(), 0..300),
            window in 1usize..40,
            t1 in 0.01f64..1.0,
            t2 in 0.01f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = convergence_episode(&series, window, lo);
            let b = convergence_episode(&series, window, hi);
            match (a, b) {
                (_, None) => {}
                (None, Some(_)) => prop_assert!(false, "higher threshold converged, lower did not"),
                (Some(x), Some(y)) => prop_assert!(x <= y),
            }
            if let Some(e) = a {
                prop_assert!(e + 1 >= window && e < series.len());
            }
        }
    }
}
