use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: length mismatch ({a} vs {b})")));
    }
    if a == 0 {
        return Err(Error::invalid(format!("{what}: empty input")));
    }
    Ok(())
}

/// Trapezoid rule over an increasing grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> Result<f64> {
    check_lengths(grid.len(), values.len(), "trapezoid")?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("trapezoid: grid must be strictly increasing"));
    }
    Ok(grid.windows(2).zip(values.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum())
}

/// Root integrated squared error between two densities tabulated on one grid.
pub fn rimse(f_hat: &[f64], f_true: &[f64], grid: &[f64]) -> Result<f64> {
    check_lengths(f_hat.len(), f_true.len(), "rimse")?;
    if grid.len() < 2 {
        return Err(Error::invalid("rimse: grid needs at least two points"));
    }
    let sq: Vec<f64> = f_hat.iter().zip(f_true).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(trapezoid(grid, &sq)?.max(0.0).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len(), "mae")?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Harrell's concordance with predicted times as scores.
///
/// A pair is comparable when the earlier time is an observed event; it is
/// concordant when the earlier time also has the smaller score. Score ties
/// count one half.
pub fn c_index(scores: &[f64], times: &[f64], delta: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), times.len(), "c_index")?;
    check_lengths(scores.len(), delta.len(), "c_index")?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (mut comparable, mut concordant) = (0u64, 0.0f64);
    for (pos, &i) in order.iter().enumerate() {
        if !delta[i] {
            continue;
        }
        for &j in &order[pos + 1..] {
            if times[j] <= times[i] {
                continue;
            }
            comparable += 1;
            if scores[i] < scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric("c_index: no comparable pairs".into()));
    }
    Ok(concordant / comparable as f64)
}

/// Kaplan-Meier estimate of the censoring survival `G`, treating censored
/// rows as the events.
#[derive(Debug, Clone)]
pub struct CensoringSurvival {
    /// Distinct censoring times with `G` just after each.
    steps: Vec<(f64, f64)>,
}

impl CensoringSurvival {
    pub fn fit(times: &[f64], delta: &[bool]) -> Result<Self> {
        check_lengths(times.len(), delta.len(), "censoring survival")?;
        let mut sorted: Vec<f64> = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut censor: Vec<f64> = times.iter().zip(delta).filter(|(_, &d)| !d).map(|(&t, _)| t).collect();
        censor.sort_by(f64::total_cmp);
        let mut steps = Vec::new();
        let mut g = 1.0;
        let mut k = 0;
        while k < censor.len() {
            let c = censor[k];
            let mut d = 0usize;
            while k < censor.len() && censor[k] == c {
                d += 1;
                k += 1;
            }
            let at_risk = sorted.len() - sorted.partition_point(|&t| t < c);
            g *= 1.0 - d as f64 / at_risk as f64;
            steps.push((c, g));
        }
        Ok(Self { steps })
    }

    /// `G(t)`, right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.steps.partition_point(|&(c, _)| c <= t);
        if k == 0 {
            1.0
        } else {
            self.steps[k - 1].1
        }
    }

    /// `G(t-)`, the left limit.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.steps.partition_point(|&(c, _)| c < t);
        if k == 0 {
            1.0
        } else {
            self.steps[k - 1].1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbsResult {
    pub value: f64,
    /// Upper end of the integration range actually used.
    pub horizon: f64,
    /// Set when the censoring survival reached zero before the requested horizon.
    pub truncated: bool,
}

/// Inverse-probability-of-censoring weighted Brier score at one time.
fn brier_at(k: usize, t: f64, curves: &[Vec<f64>], times: &[f64], delta: &[bool], g: &CensoringSurvival) -> f64 {
    let g_t = g.at(t);
    let mut acc = 0.0;
    for (i, curve) in curves.iter().enumerate() {
        let s = curve[k];
        if times[i] <= t {
            if delta[i] {
                acc += s * s / g.before(times[i]);
            }
        } else {
            acc += (1.0 - s) * (1.0 - s) / g_t;
        }
    }
    acc / curves.len() as f64
}

/// Integrated Brier score of per-subject survival curves tabulated on `grid`,
/// averaged over `[grid[0], horizon]`.
pub fn ibs(curves: &[Vec<f64>], grid: &[f64], times: &[f64], delta: &[bool], horizon: f64) -> Result<IbsResult> {
    check_lengths(curves.len(), times.len(), "ibs")?;
    check_lengths(curves.len(), delta.len(), "ibs")?;
    if curves.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::invalid("ibs: every survival curve must be tabulated on the grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.first().is_some_and(|&g| g < 0.0) {
        return Err(Error::invalid("ibs: grid must be nonnegative and strictly increasing"));
    }
    if !(horizon > grid[0]) || horizon > grid[grid.len() - 1] {
        return Err(Error::invalid(format!("ibs: horizon {horizon} outside the grid span")));
    }
    let g = CensoringSurvival::fit(times, delta)?;
    let mut used = 0;
    let mut truncated = false;
    for &t in grid {
        if t > horizon {
            break;
        }
        if g.at(t) <= 0.0 {
            truncated = true;
            break;
        }
        used += 1;
    }
    if used < 2 {
        return Err(Error::UndefinedMetric("ibs: censoring survival vanishes before the grid starts".into()));
    }
    let bs: Vec<f64> = (0..used).map(|k| brier_at(k, grid[k], curves, times, delta, &g)).collect();
    let span = grid[used - 1] - grid[0];
    Ok(IbsResult { value: trapezoid(&grid[..used], &bs)? / span, horizon: grid[used - 1], truncated })
}

pub fn coverage_probability(intervals: &[(f64, f64)], truths: &[f64]) -> Result<f64> {
    check_lengths(intervals.len(), truths.len(), "coverage")?;
    let hits = intervals.iter().zip(truths).filter(|((lo, hi), t)| lo <= t && *t <= hi).count();
    Ok(hits as f64 / truths.len() as f64)
}
