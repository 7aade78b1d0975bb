//! Truncated stick-breaking mixture of Weibull distributions for the
//! multiplicative error `xi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent cap applied to `nu * (ln x - ln psi)` before exponentiation.
pub(crate) const MAX_LOG_POWER: f64 = 700.0;

/// `ln(exp(a_1) + ... + exp(a_n))`, stable for large magnitudes.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mixture weights from stick fractions `v_1..v_{L-1}`:
/// `p_l = v_l prod_{m<l}(1 - v_m)`, `p_L = prod_{m<L}(1 - v_m)`.
pub fn stick_breaking_weights(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = v.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::invalid(format!("stick fraction {x} outside (0, 1)")));
    }
    let mut weights = Vec::with_capacity(v.len() + 1);
    let mut remaining = 1.0;
    for &frac in v {
        weights.push(remaining * frac);
        remaining *= 1.0 - frac;
    }
    weights.push(remaining);
    Ok(weights)
}

/// Inverse of [`stick_breaking_weights`]: `v_l = p_l / sum_{m >= l} p_m`.
pub fn sticks_from_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() < 2 {
        return Err(Error::invalid("need at least two mixture weights"));
    }
    // suffix sums accumulated from the small end
    let mut tails = vec![0.0; weights.len()];
    let mut acc = 0.0;
    for (t, &p) in tails.iter_mut().zip(weights).rev() {
        acc += p;
        *t = acc;
    }
    let mut v = Vec::with_capacity(weights.len() - 1);
    for (&p, &tail) in weights.iter().zip(&tails).take(weights.len() - 1) {
        let frac = p / tail;
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::invalid(format!("weights do not define stick fractions in (0, 1): {frac}")));
        }
        v.push(frac);
    }
    Ok(v)
}

/// Log weights from unconstrained stick logits `u_l = logit(v_l)`.
pub(crate) fn log_stick_weights(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), logits.len() + 1);
    let mut log_remaining = 0.0;
    for (o, &u) in out.iter_mut().zip(logits) {
        // ln v = -softplus(-u), ln(1 - v) = -softplus(u)
        *o = log_remaining - softplus(-u);
        log_remaining -= softplus(u);
    }
    out[logits.len()] = log_remaining;
}

/// Error bound on the L1 distance between the truncated and the infinite
/// stick-breaking mixture: `4 n exp(-(L - 1) / c)`.
pub fn truncation_error_bound(n: usize, truncation: usize, mass: f64) -> Result<f64> {
    if n == 0 || truncation == 0 || !(mass > 0.0) {
        return Err(Error::invalid("need n >= 1, L >= 1 and c > 0"));
    }
    Ok(4.0 * n as f64 * (-((truncation - 1) as f64) / mass).exp())
}

/// Smallest truncation level whose bound does not exceed `tolerance`.
pub fn truncation_for_tolerance(n: usize, mass: f64, tolerance: f64) -> usize {
    let needed = 1.0 + mass * (4.0 * n as f64 / tolerance).ln();
    needed.ceil().max(1.0) as usize
}

/// Weibull log-density with the power term computed in log space.
#[inline]
pub fn weibull_logpdf(x: f64, scale: f64, shape: f64) -> f64 {
    let lx = x.ln();
    let g = (shape * (lx - scale.ln())).min(MAX_LOG_POWER);
    shape.ln() - lx + g - g.exp()
}

/// `1 - exp(-(x / scale)^shape)`.
#[inline]
pub fn weibull_cdf(x: f64, scale: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = (shape * (x.ln() - scale.ln())).min(MAX_LOG_POWER);
    -(-g.exp()).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullMixture {
    weights: Vec<f64>,
    scales: Vec<f64>,
    shapes: Vec<f64>,
}

impl WeibullMixture {
    pub fn new(weights: Vec<f64>, scales: Vec<f64>, shapes: Vec<f64>) -> Result<Self> {
        let l = weights.len();
        if l == 0 || scales.len() != l || shapes.len() != l {
            return Err(Error::invalid("mixture components must be nonempty and equally sized"));
        }
        if weights.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        if scales.iter().chain(&shapes).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("Weibull scales and shapes must be positive"));
        }
        Ok(Self { weights, scales, shapes })
    }

    /// Builds the mixture from stick fractions.
    pub fn from_sticks(v: &[f64], scales: Vec<f64>, shapes: Vec<f64>) -> Result<Self> {
        Self::new(stick_breaking_weights(v)?, scales, shapes)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn shapes(&self) -> &[f64] {
        &self.shapes
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain(format!("mixture CDF at negative point {x}")));
        }
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        let total: f64 = self
            .components()
            .map(|(p, psi, nu)| p * weibull_cdf(x, psi, nu))
            .sum();
        total.clamp(0.0, 1.0)
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain(format!("mixture survival at negative point {x}")));
        }
        Ok(self.log_survival_unchecked(x).exp())
    }

    /// `ln sum_l p_l exp(-(x / psi_l)^nu_l)`.
    pub(crate) fn log_survival_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lx = x.ln();
        let terms: Vec<f64> = self
            .components()
            .map(|(p, psi, nu)| p.ln() - (nu * (lx - psi.ln())).min(MAX_LOG_POWER).exp())
            .collect();
        log_sum_exp(&terms).min(0.0)
    }

    pub fn logpdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("mixture density at nonpositive point {x}")));
        }
        Ok(self.logpdf_unchecked(x))
    }

    pub(crate) fn logpdf_unchecked(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components()
            .map(|(p, psi, nu)| p.ln() + weibull_logpdf(x, psi, nu))
            .collect();
        log_sum_exp(&terms)
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.scales)
            .zip(&self.shapes)
            .map(|((&p, &psi), &nu)| (p, psi, nu))
    }
}
