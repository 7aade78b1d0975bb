use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute empirical-CDF gap above which a censored-data knot is added.
pub const DEFAULT_KNOT_GAP: f64 = 0.05;

/// Knots chosen from empirical quantiles.
///
/// `initial` keeps the raw quantiles `Q(j / N_I)`, `j = 0..N_I`, including
/// repeats, so the criterion knot can be located by its quantile level.
/// `knots` is the strictly increasing set actually used by the basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSelection {
    pub n_initial: usize,
    pub initial: Vec<f64>,
    pub knots: Vec<f64>,
    /// Knots inserted by censored-data interpolation.
    #[serde(default)]
    pub inserted: Vec<f64>,
}

/// `F_n(s) = n^-1 #{ y_i <= s }`.
pub fn empirical_cdf(sorted: &[f64], s: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let count = sorted.partition_point(|&v| v <= s);
    count as f64 / sorted.len() as f64
}

/// `Q(q) = inf { s : q <= F_n(s) }`, with `Q(0)` taken as the sample minimum.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "empirical quantile of an empty sample");
    if q <= 0.0 {
        return sorted[0];
    }
    // smallest k (1-based) with k / n >= q
    let k = ((q * n as f64) - 1e-12).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

fn sorted_finite(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted)
}

fn dedup_sorted(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if out.last().is_none_or(|&last| v > last) {
            out.push(v);
        }
    }
    out
}

/// Interior knots at `Q(j / n_initial)` for `j = 0..n_initial`.
///
/// Repeated quantiles collapse to one knot (with a warning), so the returned
/// `knots` may be shorter than `n_initial`.
pub fn select_quantile_knots(y_tilde: &[f64], n_initial: usize) -> Result<KnotSelection> {
    if n_initial < 2 {
        return Err(Error::invalid(format!("need at least 2 knots, got {n_initial}")));
    }
    let sorted = sorted_finite(y_tilde, "transformed responses")?;
    let distinct = dedup_sorted(&sorted).len();
    if n_initial > distinct {
        return Err(Error::DegenerateKnots(format!(
            "{n_initial} knots requested but only {distinct} distinct observations"
        )));
    }
    let initial: Vec<f64> = (0..n_initial)
        .map(|j| empirical_quantile(&sorted, j as f64 / n_initial as f64))
        .collect();
    let knots = dedup_sorted(&initial);
    if knots.len() < initial.len() {
        warn!(
            "collapsed {} duplicate quantile knot(s); {} interior knots remain",
            initial.len() - knots.len(),
            knots.len()
        );
    }
    Ok(KnotSelection { n_initial, initial, knots, inserted: Vec::new() })
}

/// Quantile knots from the uncensored responses, completed with quantiles of
/// all responses wherever the two empirical CDFs differ by at least `gap` at
/// an initial knot.
pub fn interpolate_knots_censored(
    y_all: &[f64],
    y_uncensored: &[f64],
    n_initial: usize,
    gap: f64,
) -> Result<KnotSelection> {
    if y_uncensored.is_empty() {
        return Err(Error::Data("no uncensored observations".into()));
    }
    let all = sorted_finite(y_all, "responses")?;
    let unc = sorted_finite(y_uncensored, "uncensored responses")?;
    let mut selection = select_quantile_knots(&unc, n_initial)?;

    let mut inserted = Vec::new();
    for (j, &s) in selection.initial.iter().enumerate() {
        let diff = (empirical_cdf(&all, s) - empirical_cdf(&unc, s)).abs();
        if diff >= gap {
            inserted.push(empirical_quantile(&all, j as f64 / n_initial as f64));
        }
    }
    if inserted.is_empty() {
        return Ok(selection);
    }
    let mut merged = selection.knots.clone();
    merged.extend_from_slice(&inserted);
    merged.sort_by(|a, b| a.total_cmp(b));
    selection.knots = dedup_sorted(&merged);
    selection.inserted = inserted;
    Ok(selection)
}
