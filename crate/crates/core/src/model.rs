//! The working model `H(y~) = xi * exp(beta' z)`.
//!
//! `H` is a positive I-spline combination on `(0, tau)`, `xi` follows a
//! truncated stick-breaking Weibull mixture and `beta` has a flat (or diffuse
//! normal) prior. Sampling happens on an unconstrained vector laid out as
//! `[ln alpha | logit v | ln psi | ln nu | beta]`.

use std::ops::Range;

use log::warn;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{
    interpolate_knots_censored, select_quantile_knots, tau_sigmoid, BasisSpec, KnotSelection,
    DEFAULT_KNOT_GAP,
};
use crate::error::{Error, Result};
use crate::mixture::{
    log_stick_weights, softplus, sticks_from_weights, stick_breaking_weights,
    WeibullMixture, MAX_LOG_POWER,
};
use crate::sampler::LogDensity;

/// Default relative jitter separating tied responses.
pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;

/// Transformed responses closer than this to `0` or `tau` are rejected.
const SATURATION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Positive,
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "real-line" => Ok(Self::Real),
            "positive" => Ok(Self::Positive),
            other => Err(Error::invalid(format!("unknown response domain {other:?}"))),
        }
    }
}

/// Responses, event indicators and covariates.
///
/// Invariants: equal lengths; every transformed response lies strictly inside
/// `(0, tau)`; the covariate matrix has full column rank on uncensored rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    delta: Vec<bool>,
    z: Vec<Vec<f64>>,
    domain: Domain,
    tau: f64,
    y_tilde: Vec<f64>,
}

impl Dataset {
    /// `delta = None` means complete (uncensored) data.
    pub fn new(
        y: Vec<f64>,
        delta: Option<Vec<bool>>,
        z: Vec<Vec<f64>>,
        domain: Domain,
        tau: f64,
    ) -> Result<Self> {
        Self::with_tie_epsilon(y, delta, z, domain, tau, DEFAULT_TIE_EPSILON)
    }

    pub fn with_tie_epsilon(
        mut y: Vec<f64>,
        delta: Option<Vec<bool>>,
        z: Vec<Vec<f64>>,
        domain: Domain,
        tau: f64,
        tie_epsilon: f64,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("no observations".into()));
        }
        let delta = delta.unwrap_or_else(|| vec![true; n]);
        if delta.len() != n || z.len() != n {
            return Err(Error::Data(format!(
                "length mismatch: {n} responses, {} indicators, {} covariate rows",
                delta.len(),
                z.len()
            )));
        }
        let p = z[0].len();
        if z.iter().any(|row| row.len() != p) {
            return Err(Error::Data("ragged covariate matrix".into()));
        }
        if z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite covariate value".into()));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response {v}")));
        }
        if domain == Domain::Positive {
            if let Some(v) = y.iter().find(|&&v| v <= 0.0) {
                return Err(Error::Data(format!("positive-domain response {v} is not positive")));
            }
        }
        if !delta.iter().any(|&d| d) {
            return Err(Error::Data("no uncensored observations".into()));
        }
        if !(tie_epsilon >= 0.0) {
            return Err(Error::invalid("tie epsilon must be nonnegative"));
        }

        let jittered = jitter_ties(&mut y, tie_epsilon);
        if jittered > 0 {
            warn!("jittered {jittered} tied response(s) by relative epsilon {tie_epsilon:e}");
        }

        let mut y_tilde = Vec::with_capacity(n);
        for &v in &y {
            let t = tau_sigmoid(v, tau)?;
            if t < SATURATION_MARGIN || tau - t < SATURATION_MARGIN {
                return Err(Error::Data(format!(
                    "response {v} saturates the transform at tau = {tau}; rescale the responses or use a larger tau"
                )));
            }
            y_tilde.push(t);
        }

        let uncensored: Vec<Vec<f64>> =
            z.iter().zip(&delta).filter(|(_, &d)| d).map(|(r, _)| r.clone()).collect();
        let rank = matrix_rank(&uncensored, p);
        if rank < p {
            return Err(Error::RankDeficient { rank, p });
        }
        Ok(Self { y, delta, z, domain, tau, y_tilde })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.z[0].len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn y_tilde(&self) -> &[f64] {
        &self.y_tilde
    }

    pub fn is_censored(&self) -> bool {
        self.delta.iter().any(|&d| !d)
    }

    /// Fraction of censored observations.
    pub fn censoring_rate(&self) -> f64 {
        self.delta.iter().filter(|&&d| !d).count() as f64 / self.n() as f64
    }

    /// Quantile knots on the uncensored transformed responses, completed by
    /// interpolation when censoring opens a CDF gap.
    pub fn select_knots(&self, n_initial: usize) -> Result<KnotSelection> {
        if !self.is_censored() {
            return select_quantile_knots(&self.y_tilde, n_initial);
        }
        let unc: Vec<f64> =
            self.y_tilde.iter().zip(&self.delta).filter(|(_, &d)| d).map(|(&t, _)| t).collect();
        interpolate_knots_censored(&self.y_tilde, &unc, n_initial, DEFAULT_KNOT_GAP)
    }

    /// Knot selection plus the I-spline basis built on it.
    pub fn build_basis(&self, hp: &Hyperparams) -> Result<(KnotSelection, BasisSpec)> {
        if (hp.tau - self.tau).abs() > 0.0 {
            return Err(Error::invalid(format!(
                "dataset transformed with tau = {}, hyperparameters say {}",
                self.tau, hp.tau
            )));
        }
        let knots = self.select_knots(hp.n_initial)?;
        let spec = BasisSpec::new(&knots.knots, hp.order, hp.tau)?;
        Ok((knots, spec))
    }
}

/// Adds `k * eps * max(|y|, 1)` to the k-th repeat of each tied value.
fn jitter_ties(y: &mut [f64], eps: f64) -> usize {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut count = 0;
    let mut run = 0usize;
    for w in 1..sorted.len() {
        if sorted[w] == sorted[w - 1] {
            run += 1;
            let base = sorted[w];
            y[order[w]] = base + run as f64 * eps * base.abs().max(1.0);
            count += 1;
        } else {
            run = 0;
        }
    }
    count
}

/// Numerical rank by Gaussian elimination with partial pivoting on
/// column-scaled data.
fn matrix_rank(rows: &[Vec<f64>], p: usize) -> usize {
    if p == 0 {
        return 0;
    }
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    for j in 0..p {
        let scale = a.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            a.iter_mut().for_each(|r| r[j] /= scale);
        }
    }
    let tol = 1e-10 * (rows.len().max(p) as f64);
    let mut rank = 0;
    for col in 0..p {
        let pivot = (rank..a.len()).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()));
        let Some(pivot) = pivot else { break };
        if a[pivot][col].abs() <= tol {
            continue;
        }
        a.swap(rank, pivot);
        for i in rank + 1..a.len() {
            let f = a[i][col] / a[rank][col];
            if f != 0.0 {
                for k in col..p {
                    a[i][k] -= f * a[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Prior rates and structural sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Rate of the exponential prior on spline coefficients.
    pub eta: f64,
    /// Rate of the exponential prior on Weibull scales.
    pub zeta: f64,
    /// Rate of the exponential prior on Weibull shapes.
    pub rho: f64,
    /// Stick-breaking concentration.
    pub c: f64,
    /// Number of mixture components.
    pub truncation: usize,
    /// Number of initial quantile knots.
    pub n_initial: usize,
    /// M-spline order.
    pub order: usize,
    pub tau: f64,
    /// Standard deviation of an optional normal prior on `beta`; flat when `None`.
    pub beta_prior_sd: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta: 0.01,
            zeta: 0.25,
            rho: 1.0,
            c: 1.0,
            truncation: 12,
            n_initial: 4,
            order: 4,
            tau: 5.0,
            beta_prior_sd: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("zeta", self.zeta), ("rho", self.rho), ("c", self.c), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.truncation < 2 {
            return Err(Error::invalid(format!("truncation must be at least 2, got {}", self.truncation)));
        }
        if self.n_initial < 2 {
            return Err(Error::invalid(format!("need at least 2 initial knots, got {}", self.n_initial)));
        }
        if !(2..=4).contains(&self.order) {
            return Err(Error::invalid(format!("spline order must be 2, 3 or 4, got {}", self.order)));
        }
        if let Some(sd) = self.beta_prior_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::invalid(format!("beta prior sd must be positive, got {sd}")));
            }
        }
        Ok(())
    }
}

/// Block sizes of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    /// Spline coefficients.
    pub k: usize,
    /// Mixture components.
    pub l: usize,
    /// Regression coefficients.
    pub p: usize,
}

impl Layout {
    pub fn new(k: usize, l: usize, p: usize) -> Self {
        Self { k, l, p }
    }

    pub fn dim(&self) -> usize {
        self.k + (self.l - 1) + 2 * self.l + self.p
    }

    pub fn alpha(&self) -> Range<usize> {
        0..self.k
    }

    pub fn sticks(&self) -> Range<usize> {
        self.k..self.k + self.l - 1
    }

    pub fn psi(&self) -> Range<usize> {
        let start = self.k + self.l - 1;
        start..start + self.l
    }

    pub fn nu(&self) -> Range<usize> {
        let start = self.k + 2 * self.l - 1;
        start..start + self.l
    }

    pub fn beta(&self) -> Range<usize> {
        let start = self.k + 3 * self.l - 1;
        start..start + self.p
    }
}

/// One parameter state in constrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub alpha: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    pub nu: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParamPoint {
    /// Builds a point from mixture weights instead of stick fractions.
    pub fn from_weights(
        alpha: Vec<f64>,
        weights: &[f64],
        psi: Vec<f64>,
        nu: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let v = sticks_from_weights(weights)?;
        let pt = Self { alpha, v, psi, nu, beta };
        pt.validate()?;
        Ok(pt)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.alpha.len(), self.psi.len(), self.beta.len())
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.psi.len();
        if l < 1 || self.nu.len() != l || self.v.len() + 1 != l {
            return Err(Error::invalid("mixture blocks have inconsistent lengths"));
        }
        if self.alpha.is_empty() {
            return Err(Error::invalid("no spline coefficients"));
        }
        let positive = self.alpha.iter().chain(&self.psi).chain(&self.nu);
        if let Some(x) = positive.clone().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(format!("positive parameter has value {x}")));
        }
        if let Some(x) = self.v.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::invalid(format!("stick fraction {x} outside (0, 1)")));
        }
        if let Some(x) = self.beta.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite regression coefficient {x}")));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        stick_breaking_weights(&self.v)
    }

    pub fn mixture(&self) -> Result<WeibullMixture> {
        WeibullMixture::from_sticks(&self.v, self.psi.clone(), self.nu.clone())
    }

    /// `beta' z`.
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.beta.iter().zip(z).map(|(b, x)| b * x).sum()
    }
}

pub fn to_unconstrained(pt: &ParamPoint) -> Result<Vec<f64>> {
    pt.validate()?;
    let mut u = Vec::with_capacity(pt.layout().dim());
    u.extend(pt.alpha.iter().map(|a| a.ln()));
    u.extend(pt.v.iter().map(|v| v.ln() - (-v).ln_1p()));
    u.extend(pt.psi.iter().map(|x| x.ln()));
    u.extend(pt.nu.iter().map(|x| x.ln()));
    u.extend_from_slice(&pt.beta);
    Ok(u)
}

/// Inverse of [`to_unconstrained`]. Extreme logits may round stick
/// fractions to exactly 0 or 1; the log-density works in log space and is
/// unaffected.
pub fn from_unconstrained(layout: &Layout, u: &[f64]) -> Result<ParamPoint> {
    if u.len() != layout.dim() {
        return Err(Error::invalid(format!("expected {} coordinates, got {}", layout.dim(), u.len())));
    }
    if let Some(x) = u.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite unconstrained coordinate {x}")));
    }
    Ok(ParamPoint {
        alpha: u[layout.alpha()].iter().map(|x| x.exp()).collect(),
        v: u[layout.sticks()].iter().map(|&x| logistic(x)).collect(),
        psi: u[layout.psi()].iter().map(|x| x.exp()).collect(),
        nu: u[layout.nu()].iter().map(|x| x.exp()).collect(),
        beta: u[layout.beta()].to_vec(),
    })
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(pt: &ParamPoint, data: &Dataset, spec: &BasisSpec) -> Result<()> {
    pt.validate()?;
    if pt.alpha.len() != spec.n_basis() {
        return Err(Error::invalid(format!(
            "{} spline coefficients for a basis of size {}",
            pt.alpha.len(),
            spec.n_basis()
        )));
    }
    if pt.beta.len() != data.p() {
        return Err(Error::invalid(format!("{} coefficients for {} covariates", pt.beta.len(), data.p())));
    }
    Ok(())
}

/// Per-observation log-likelihood contributions.
pub fn loglik_terms(pt: &ParamPoint, data: &Dataset, spec: &BasisSpec) -> Result<Vec<f64>> {
    check_dims(pt, data, spec)?;
    let mix = pt.mixture()?;
    let mut out = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let t = data.y_tilde[i];
        let (b, m) = spec.eval(t);
        let h: f64 = pt.alpha.iter().zip(&b).map(|(a, x)| a * x).sum();
        let eta = pt.linear_predictor(&data.z[i]);
        let x = h * (-eta).exp();
        out.push(if data.delta[i] {
            let hp: f64 = pt.alpha.iter().zip(&m).map(|(a, x)| a * x).sum();
            mix.logpdf_unchecked(x) + hp.ln() - eta
        } else {
            mix.log_survival_unchecked(x)
        });
    }
    Ok(out)
}

pub fn loglik(pt: &ParamPoint, data: &Dataset, spec: &BasisSpec) -> Result<f64> {
    Ok(loglik_terms(pt, data, spec)?.iter().sum())
}

pub fn logprior(pt: &ParamPoint, hp: &Hyperparams) -> Result<f64> {
    pt.validate()?;
    let exp_block = |xs: &[f64], rate: f64| -> f64 { xs.iter().map(|x| rate.ln() - rate * x).sum() };
    let mut lp = exp_block(&pt.alpha, hp.eta) + exp_block(&pt.psi, hp.zeta) + exp_block(&pt.nu, hp.rho);
    lp += pt.v.iter().map(|v| hp.c.ln() + (hp.c - 1.0) * (-v).ln_1p()).sum::<f64>();
    if let Some(sd) = hp.beta_prior_sd {
        let norm = -(sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
        lp += pt.beta.iter().map(|b| norm - 0.5 * (b / sd).powi(2)).sum::<f64>();
    }
    Ok(lp)
}

/// `Lambda(s | z) = -ln sum_l p_l exp(-(H(s) e^{-beta'z} / psi_l)^nu_l)`.
pub fn conditional_cumulative_hazard(pt: &ParamPoint, z: &[f64], s: f64, spec: &BasisSpec) -> Result<f64> {
    if !(s > 0.0 && s < spec.tau()) {
        return Err(Error::domain(format!("{s} outside (0, {})", spec.tau())));
    }
    if z.len() != pt.beta.len() {
        return Err(Error::invalid("covariate length does not match coefficients"));
    }
    let h = crate::basis::eval_h(&pt.alpha, spec, s)?;
    let x = h * (-pt.linear_predictor(z)).exp();
    Ok((-pt.mixture()?.log_survival_unchecked(x)).max(0.0))
}

/// Log posterior over unconstrained coordinates with basis values cached
/// per observation.
#[derive(Debug, Clone)]
pub struct TransformationModel {
    spec: BasisSpec,
    hp: Hyperparams,
    layout: Layout,
    n: usize,
    delta: Vec<bool>,
    /// Row-major `n x K` I-spline values at the transformed responses.
    ivals: Vec<f64>,
    /// Row-major `n x K` M-spline values at the transformed responses.
    mvals: Vec<f64>,
    /// Row-major `n x p` covariates.
    z: Vec<f64>,
    /// Row-major `J x K` I-spline values at the interior knots.
    knot_vals: Vec<f64>,
}

impl TransformationModel {
    pub fn new(data: &Dataset, spec: &BasisSpec, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if (spec.tau() - data.tau).abs() > 0.0 {
            return Err(Error::invalid("basis and dataset use different tau"));
        }
        let k = spec.n_basis();
        let n = data.n();
        let mut ivals = vec![0.0; n * k];
        let mut mvals = vec![0.0; n * k];
        for (i, &t) in data.y_tilde.iter().enumerate() {
            spec.eval_into(t, &mut ivals[i * k..(i + 1) * k], &mut mvals[i * k..(i + 1) * k]);
        }
        let knots = spec.interior_knots();
        let mut knot_vals = vec![0.0; knots.len() * k];
        let mut scratch = vec![0.0; k];
        for (j, &s) in knots.iter().enumerate() {
            spec.eval_into(s, &mut knot_vals[j * k..(j + 1) * k], &mut scratch);
        }
        Ok(Self {
            spec: spec.clone(),
            hp: hp.clone(),
            layout: Layout::new(k, hp.truncation, data.p()),
            n,
            delta: data.delta.clone(),
            ivals,
            mvals,
            z: data.z.iter().flatten().copied().collect(),
            knot_vals,
        })
    }

    /// Convenience: selects knots, builds the basis and the model.
    pub fn from_data(data: &Dataset, hp: &Hyperparams) -> Result<(KnotSelection, Self)> {
        hp.validate()?;
        let (knots, spec) = data.build_basis(hp)?;
        Ok((knots, Self::new(data, &spec, hp)?))
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_knots(&self) -> usize {
        self.spec.interior_knots().len()
    }

    /// `H` at every interior knot.
    pub fn h_at_knots(&self, alpha: &[f64]) -> Vec<f64> {
        let k = self.layout.k;
        self.knot_vals.chunks(k).map(|row| row.iter().zip(alpha).map(|(b, a)| b * a).sum()).collect()
    }

    /// Names of the entries returned by [`LogDensity::derived`].
    pub fn derived_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.layout.p).map(|j| format!("beta_{j}")).collect();
        names.extend((1..=self.n_knots()).map(|j| format!("H_s{j}")));
        names
    }

    /// Log posterior and (optionally) its gradient.
    fn evaluate(&self, u: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let Layout { k, l, p } = self.layout;
        debug_assert_eq!(u.len(), self.layout.dim());
        let hp = &self.hp;
        let ua = &u[self.layout.alpha()];
        let uv = &u[self.layout.sticks()];
        let upsi = &u[self.layout.psi()];
        let unu = &u[self.layout.nu()];
        let beta = &u[self.layout.beta()];

        let alpha: Vec<f64> = ua.iter().map(|x| x.exp()).collect();
        let psi: Vec<f64> = upsi.iter().map(|x| x.exp()).collect();
        let nu: Vec<f64> = unu.iter().map(|x| x.exp()).collect();
        let mut logp = vec![0.0; l];
        log_stick_weights(uv, &mut logp);

        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        // gradient accumulators w.r.t. ln p_l
        let mut g_logp = vec![0.0; l];
        let mut terms = vec![0.0; l];
        let mut gs = vec![0.0; l];
        let mut ps = vec![0.0; l];
        let mut active = vec![true; l];

        let mut lp = 0.0;
        for i in 0..self.n {
            let brow = &self.ivals[i * k..(i + 1) * k];
            let zrow = &self.z[i * p..(i + 1) * p];
            let h: f64 = alpha.iter().zip(brow).map(|(a, b)| a * b).sum();
            let eta: f64 = beta.iter().zip(zrow).map(|(b, z)| b * z).sum();
            let lnx = h.ln() - eta;
            let observed = self.delta[i];
            for j in 0..l {
                let raw = nu[j] * (lnx - upsi[j]);
                active[j] = raw < MAX_LOG_POWER;
                gs[j] = raw.min(MAX_LOG_POWER);
                ps[j] = gs[j].exp();
                terms[j] = if observed { logp[j] + unu[j] + gs[j] - ps[j] } else { logp[j] - ps[j] };
            }
            // shares the exponentials between the log-sum-exp and the weights
            let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                return f64::NEG_INFINITY;
            }
            let mut total = 0.0;
            for t in terms.iter_mut() {
                *t = (*t - peak).exp();
                total += *t;
            }
            let lse = peak + total.ln();
            let mrow = &self.mvals[i * k..(i + 1) * k];
            let hprime: f64 = if observed { alpha.iter().zip(mrow).map(|(a, m)| a * m).sum() } else { 1.0 };
            lp += if observed { lse - h.ln() + hprime.ln() } else { lse };

            let Some(g) = grad.as_deref_mut() else { continue };
            // d term / d ln x
            let mut a_i = 0.0;
            for j in 0..l {
                let w = terms[j] / total;
                g_logp[j] += w;
                let dg = if active[j] { 1.0 } else { 0.0 };
                if observed {
                    a_i += w * nu[j] * (1.0 - ps[j]) * dg;
                    g[self.layout.psi().start + j] -= w * nu[j] * (1.0 - ps[j]) * dg;
                    g[self.layout.nu().start + j] += w * (1.0 + gs[j] * (1.0 - ps[j]) * dg);
                } else {
                    a_i -= w * nu[j] * ps[j] * dg;
                    g[self.layout.psi().start + j] += w * nu[j] * ps[j] * dg;
                    g[self.layout.nu().start + j] -= w * gs[j] * ps[j] * dg;
                }
            }
            let dlnh = if observed { a_i - 1.0 } else { a_i };
            for j in 0..k {
                let mut d = dlnh * alpha[j] * brow[j] / h;
                if observed {
                    d += alpha[j] * mrow[j] / hprime;
                }
                g[j] += d;
            }
            let bstart = self.layout.beta().start;
            for (j, zj) in zrow.iter().enumerate() {
                g[bstart + j] -= a_i * zj;
            }
        }

        // priors plus log-Jacobians
        for (j, (&a, &x)) in alpha.iter().zip(ua).enumerate() {
            lp += hp.eta.ln() - hp.eta * a + x;
            if let Some(g) = grad.as_deref_mut() {
                g[j] += 1.0 - hp.eta * a;
            }
        }
        for (j, (&s, &x)) in psi.iter().zip(upsi).enumerate() {
            lp += hp.zeta.ln() - hp.zeta * s + x;
            if let Some(g) = grad.as_deref_mut() {
                g[self.layout.psi().start + j] += 1.0 - hp.zeta * s;
            }
        }
        for (j, (&s, &x)) in nu.iter().zip(unu).enumerate() {
            lp += hp.rho.ln() - hp.rho * s + x;
            if let Some(g) = grad.as_deref_mut() {
                g[self.layout.nu().start + j] += 1.0 - hp.rho * s;
            }
        }
        for &x in uv {
            // ln Beta(v; 1, c) + ln v + ln(1 - v)
            lp += hp.c.ln() - hp.c * softplus(x) - softplus(-x);
        }
        if let Some(g) = grad.as_deref_mut() {
            // chain rule from ln p to the stick logits
            let start = self.layout.sticks().start;
            let mut tail = g_logp[l - 1];
            for m in (0..l - 1).rev() {
                let v = logistic(uv[m]);
                g[start + m] = (1.0 - v) * g_logp[m] - v * tail + 1.0 - (hp.c + 1.0) * v;
                tail += g_logp[m];
            }
        }
        if let Some(sd) = hp.beta_prior_sd {
            let norm = -(sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
            for (j, &b) in beta.iter().enumerate() {
                lp += norm - 0.5 * (b / sd).powi(2);
                if let Some(g) = grad.as_deref_mut() {
                    g[self.layout.beta().start + j] -= b / (sd * sd);
                }
            }
        }
        if lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl LogDensity for TransformationModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn logp(&self, u: &[f64]) -> f64 {
        self.evaluate(u, None)
    }

    fn logp_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(u, Some(grad))
    }

    /// Prior draw via [`default_init`].
    fn initial_point(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        to_unconstrained(&default_init(&self.hp, &self.layout, rng)).expect("prior draws are valid points")
    }

    /// `beta` followed by `H` at every interior knot.
    fn derived(&self, u: &[f64]) -> Vec<f64> {
        let alpha: Vec<f64> = u[self.layout.alpha()].iter().map(|x| x.exp()).collect();
        let mut out = u[self.layout.beta()].to_vec();
        out.extend(self.h_at_knots(&alpha));
        out
    }
}

/// `loglik + logprior + ln |Jacobian|` at `from_unconstrained(u)`.
pub fn logposterior_unconstrained(u: &[f64], data: &Dataset, spec: &BasisSpec, hp: &Hyperparams) -> Result<f64> {
    let model = TransformationModel::new(data, spec, hp)?;
    check_len(u, &model)?;
    Ok(model.logp(u))
}

pub fn grad_logposterior_unconstrained(
    u: &[f64],
    data: &Dataset,
    spec: &BasisSpec,
    hp: &Hyperparams,
) -> Result<Vec<f64>> {
    let model = TransformationModel::new(data, spec, hp)?;
    check_len(u, &model)?;
    let mut g = vec![0.0; u.len()];
    model.logp_grad(u, &mut g);
    Ok(g)
}

fn check_len(u: &[f64], model: &TransformationModel) -> Result<()> {
    if u.len() != model.dim() {
        return Err(Error::invalid(format!("expected {} coordinates, got {}", model.dim(), u.len())));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite unconstrained coordinate"));
    }
    Ok(())
}

/// Draws `alpha, psi, nu` from their priors, sticks from `Beta(1, c)` and
/// `beta` from `N(0, 0.1^2)`.
pub fn default_init<R: Rng + ?Sized>(hp: &Hyperparams, layout: &Layout, rng: &mut R) -> ParamPoint {
    let draw_exp = |rate: f64, n: usize, rng: &mut R| -> Vec<f64> {
        let d = Exp::new(rate).expect("validated rate");
        // floor keeps the unconstrained image finite
        (0..n).map(|_| d.sample(rng).max(1e-8)).collect()
    };
    let alpha = draw_exp(hp.eta, layout.k, rng);
    let stick = Beta::new(1.0, hp.c).expect("validated concentration");
    let v = (0..layout.l - 1).map(|_| stick.sample(rng).clamp(1e-8, 1.0 - 1e-8)).collect();
    let psi = draw_exp(hp.zeta, layout.l, rng);
    let nu = draw_exp(hp.rho, layout.l, rng);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let beta = (0..layout.p).map(|_| normal.sample(rng)).collect();
    ParamPoint { alpha, v, psi, nu, beta }
}
