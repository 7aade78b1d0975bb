use serde::{Deserialize, Serialize};

use super::metrics::{c_index, coverage_probability, ibs, mae, rimse, IbsResult};
use super::settings::{SimData, Truth};
use crate::error::{Error, Result};
use crate::inference::{default_grid, Posterior, PpdResult, DEFAULT_HAZARD_CAP};
use crate::model::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessOptions {
    pub level: f64,
    pub grid_points: usize,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self { level: 0.95, grid_points: crate::inference::DEFAULT_GRID_POINTS }
    }
}

/// Test-set accuracy of a fitted posterior. Fields that do not apply to the
/// response domain are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_test: usize,
    /// Mean over test rows of the predictive-density RIMSE (needs the truth).
    pub rimse: Option<f64>,
    /// Error of point predictions against the observed responses.
    pub mae: Option<f64>,
    /// Same error for the training-sample median used as a constant predictor.
    pub baseline_mae: Option<f64>,
    pub coverage: Option<f64>,
    pub c_index: Option<f64>,
    pub ibs: Option<IbsResult>,
    /// Quantile level used for point predictions.
    pub point_level: f64,
    /// Quantiles that fell outside the grid's CDF range and were clipped to
    /// a grid end (point predictions and interval ends counted separately).
    pub clipped: usize,
}

/// Anything that yields a predictive distribution for a covariate vector.
pub trait Predictor {
    fn ppd(&self, z: &[f64], grid: &[f64]) -> Result<PpdResult>;

    /// Survival `1 - F` on the grid.
    fn survival(&self, z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ppd(z, grid)?.cdf.iter().map(|c| 1.0 - c).collect())
    }
}

impl Predictor for Posterior {
    fn ppd(&self, z: &[f64], grid: &[f64]) -> Result<PpdResult> {
        Posterior::ppd(self, z, grid)
    }

    fn survival(&self, z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.conditional_survival(z, grid, DEFAULT_HAZARD_CAP)?.survival)
    }
}

/// The generating law, usable as an oracle predictor.
impl Predictor for Truth {
    fn ppd(&self, z: &[f64], grid: &[f64]) -> Result<PpdResult> {
        Ok(PpdResult {
            grid: grid.to_vec(),
            cdf: grid.iter().map(|&s| self.cdf(s, z)).collect(),
            pdf: grid.iter().map(|&s| self.pdf(s, z)).collect(),
        })
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores a posterior on held-out rows.
///
/// Point predictions are PPD medians, or PPD quantiles at the training
/// censoring rate when the training data are censored. Real responses are
/// scored by MAE and interval coverage; positive responses by the C-index of
/// the predicted times and the integrated Brier score of the conditional
/// survival curves.
pub fn assess<P: Predictor + ?Sized>(
    predictor: &P,
    train: &SimData,
    test: &SimData,
    truth: Option<&Truth>,
    opts: &AssessOptions,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let grid = default_grid(&test.y, test.domain, opts.grid_points)?;
    let censored = train.delta.iter().any(|&d| !d);
    let point_level = if censored { train.censoring_rate() } else { 0.5 };

    let mut preds = Vec::with_capacity(test.len());
    let mut intervals = Vec::with_capacity(test.len());
    let mut curves = Vec::new();
    let mut rimses = Vec::new();
    let mut clipped = 0;
    let tail = 0.5 * (1.0 - opts.level);
    for z in &test.z {
        let ppd = predictor.ppd(z, &grid)?;
        if let Some(t) = truth {
            let f: Vec<f64> = grid.iter().map(|&s| t.pdf(s, z)).collect();
            rimses.push(rimse(&ppd.pdf, &f, &grid)?);
        }
        let (p, c0) = ppd.quantile_clipped(point_level)?;
        let (lo, c1) = ppd.quantile_clipped(tail)?;
        let (hi, c2) = ppd.quantile_clipped(1.0 - tail)?;
        clipped += [c0, c1, c2].iter().filter(|&&c| c).count();
        preds.push(p);
        intervals.push((lo, hi));
        if test.domain == Domain::Positive {
            curves.push(predictor.survival(z, &grid)?);
        }
    }
    let rimse_mean = (!rimses.is_empty()).then(|| rimses.iter().sum::<f64>() / rimses.len() as f64);

    let mut m = Metrics {
        n_test: test.len(),
        rimse: rimse_mean,
        mae: None,
        baseline_mae: None,
        coverage: None,
        c_index: None,
        ibs: None,
        point_level,
        clipped,
    };
    match test.domain {
        Domain::Real => {
            let baseline = vec![median(&train.y); test.len()];
            m.mae = Some(mae(&preds, &test.y)?);
            m.baseline_mae = Some(mae(&baseline, &test.y)?);
            m.coverage = Some(coverage_probability(&intervals, &test.y)?);
        }
        Domain::Positive => {
            let horizon = test.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m.c_index = Some(c_index(&preds, &test.y, &test.delta)?);
            m.ibs = Some(ibs(&curves, &grid, &test.y, &test.delta, horizon)?);
        }
    }
    Ok(m)
}
