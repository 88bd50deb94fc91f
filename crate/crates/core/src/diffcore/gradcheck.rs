/// Coordinates whose analytic and numeric values differ by at most this much
/// count as agreeing regardless of their relative error.
pub const FD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub pass: bool,
    pub max_rel_err: f64,
    /// Largest `|analytic - numeric|` over all coordinates.
    pub max_abs_err: f64,
    /// Coordinate with the largest relative error, if any exceeded the floor.
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// The relative error of coordinate `k` is `|a - n| / max(|a|, |n|)`, taken
/// as zero when `|a - n| <= FD_ABS_FLOOR`.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], analytic: &[f64], step: f64, rtol: f64) -> FdReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "analytic gradient length");
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut max_rel_err = 0.0_f64;
    let mut max_abs_err = 0.0_f64;
    let mut worst_index = None;
    for k in 0..params.len() {
        probe[k] = params[k] + step;
        let up = f(&probe);
        probe[k] = params[k] - step;
        let down = f(&probe);
        probe[k] = params[k];
        let n = (up - down) / (2.0 * step);
        numeric.push(n);

        let a = analytic[k];
        let diff = (a - n).abs();
        max_abs_err = if diff.is_nan() {
            f64::INFINITY
        } else {
            max_abs_err.max(diff)
        };
        let rel = if diff.is_nan() {
            f64::INFINITY
        } else if diff <= FD_ABS_FLOOR {
            0.0
        } else {
            diff / a.abs().max(n.abs())
        };
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = Some(k);
        }
    }
    FdReport {
        pass: max_rel_err <= rtol,
        max_rel_err,
        max_abs_err,
        worst_index,
        numeric,
    }
}
