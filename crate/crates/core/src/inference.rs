//! Posterior predictive distributions, prediction summaries, conditional
//! survival curves and unit-norm projection of the coefficients.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::basis::{tau_sigmoid_derivative, BasisSpec};
use crate::error::{Error, Result};
use crate::mixture::MAX_LOG_POWER;
use crate::model::{from_unconstrained, Domain, Layout, ParamPoint};
use crate::sampler::ChainSet;

/// One posterior draw reduced to what prediction needs.
#[derive(Debug, Clone, PartialEq)]
struct Draw {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    weights: Vec<f64>,
    scales: Vec<f64>,
    shapes: Vec<f64>,
}

impl Draw {
    fn from_point(pt: &ParamPoint) -> Result<Self> {
        let mix = pt.mixture()?;
        Ok(Self {
            alpha: pt.alpha.clone(),
            beta: pt.beta.clone(),
            weights: mix.weights().to_vec(),
            scales: mix.scales().to_vec(),
            shapes: mix.shapes().to_vec(),
        })
    }

    /// `(F, S, f)` of the error mixture at `x >= 0`; `S` is summed directly
    /// so small survival probabilities keep their precision.
    fn mixture_at(&self, x: f64) -> (f64, f64, f64) {
        if x <= 0.0 {
            return (0.0, 1.0, 0.0);
        }
        let lx = x.ln();
        let (mut cdf, mut surv, mut pdf) = (0.0, 0.0, 0.0);
        for l in 0..self.weights.len() {
            let (p, psi, nu) = (self.weights[l], self.scales[l], self.shapes[l]);
            let g = (nu * (lx - psi.ln())).min(MAX_LOG_POWER);
            let pw = g.exp();
            cdf += p * -(-pw).exp_m1();
            surv += p * (-pw).exp();
            // nu/x (x/psi)^nu exp(-(x/psi)^nu)
            pdf += p * (nu.ln() - lx + g - pw).exp();
        }
        (cdf.clamp(0.0, 1.0), surv.clamp(0.0, 1.0), pdf)
    }
}

/// Posterior draws paired with the basis they were fitted on.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: BasisSpec,
    draws: Vec<Draw>,
}

impl Posterior {
    pub fn from_points(spec: &BasisSpec, points: &[ParamPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("posterior needs at least one draw"));
        }
        let k = spec.n_basis();
        let p = points[0].beta.len();
        let mut draws = Vec::with_capacity(points.len());
        for pt in points {
            pt.validate()?;
            if pt.alpha.len() != k || pt.beta.len() != p {
                return Err(Error::invalid("draw dimensions do not match the basis"));
            }
            draws.push(Draw::from_point(pt)?);
        }
        Ok(Self { spec: spec.clone(), draws })
    }

    /// Decodes every stored unconstrained draw, chain by chain.
    pub fn from_chains(chains: &ChainSet, spec: &BasisSpec, layout: &Layout) -> Result<Self> {
        if layout.k != spec.n_basis() {
            return Err(Error::invalid("layout and basis disagree on the number of spline coefficients"));
        }
        let points: Vec<ParamPoint> =
            chains.flat_draws().map(|u| from_unconstrained(layout, u)).collect::<Result<_>>()?;
        Self::from_points(spec, &points)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.draws[0].beta.len()
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Coefficient vectors of every draw.
    pub fn betas(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.beta.clone()).collect()
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n_covariates() {
            return Err(Error::invalid(format!(
                "covariate vector has {} entries, the model expects {}",
                z.len(),
                self.n_covariates()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate value"));
        }
        Ok(())
    }

    /// Averaged `(F, S, f)` on the transformed scale, where `f` is the
    /// density with respect to the transformed response.
    fn average_transformed(&self, z: &[f64], points: &[f64]) -> Vec<(f64, f64, f64)> {
        let k = self.spec.n_basis();
        let mut ivals = vec![0.0; points.len() * k];
        let mut mvals = vec![0.0; points.len() * k];
        for (i, &t) in points.iter().enumerate() {
            self.spec.eval_into(t, &mut ivals[i * k..(i + 1) * k], &mut mvals[i * k..(i + 1) * k]);
        }
        let mut acc = vec![(0.0, 0.0, 0.0); points.len()];
        for d in &self.draws {
            let scale = (-d.beta.iter().zip(z).map(|(b, x)| b * x).sum::<f64>()).exp();
            for (i, a) in acc.iter_mut().enumerate() {
                let h: f64 = d.alpha.iter().zip(&ivals[i * k..(i + 1) * k]).map(|(a, b)| a * b).sum();
                let hp: f64 = d.alpha.iter().zip(&mvals[i * k..(i + 1) * k]).map(|(a, m)| a * m).sum();
                let (cdf, surv, pdf) = d.mixture_at(h * scale);
                a.0 += cdf;
                a.1 += surv;
                a.2 += pdf * hp * scale;
            }
        }
        let m = self.draws.len() as f64;
        acc.into_iter().map(|(c, s, f)| (c / m, s / m, f / m)).collect()
    }

    /// Maps responses into `[0, tau]`, clipping saturated points.
    fn transform_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let tau = self.spec.tau();
        let mut clipped = 0;
        let out: Vec<f64> = grid
            .iter()
            .map(|&s| {
                let t = if s >= 0.0 { tau / (1.0 + (-s).exp()) } else { tau * s.exp() / (1.0 + s.exp()) };
                if t <= 0.0 || t >= tau {
                    clipped += 1;
                }
                t.clamp(0.0, tau)
            })
            .collect();
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid contains a non-finite point"));
        }
        if clipped > 0 {
            warn!("{clipped} grid point(s) saturate the response transform and were clipped");
        }
        Ok(out)
    }

    /// Posterior predictive CDF and density of the response at `z`.
    pub fn ppd(&self, z: &[f64], grid: &[f64]) -> Result<PpdResult> {
        self.check_z(z)?;
        let tilde = self.transform_grid(grid)?;
        let avg = self.average_transformed(z, &tilde);
        let tau = self.spec.tau();
        Ok(PpdResult {
            grid: grid.to_vec(),
            cdf: avg.iter().map(|a| a.0).collect(),
            pdf: avg.iter().zip(grid).map(|(a, &s)| a.2 * tau_sigmoid_derivative(s, tau)).collect(),
        })
    }

    pub fn ppd_cdf(&self, z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ppd(z, grid)?.cdf)
    }

    pub fn ppd_pdf(&self, z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ppd(z, grid)?.pdf)
    }

    /// Conditional survival of the response at `z` on a response-scale grid.
    pub fn conditional_survival(&self, z: &[f64], grid: &[f64], hazard_cap: f64) -> Result<SurvivalCurve> {
        self.check_z(z)?;
        let tilde = self.transform_grid(grid)?;
        let surv: Vec<f64> = self.average_transformed(z, &tilde).iter().map(|a| a.1).collect();
        SurvivalCurve::new(grid.to_vec(), surv, hazard_cap)
    }

    /// Conditional survival of the transformed response at points in `[0, tau]`,
    /// the scale on which `H(0) = 0`.
    pub fn conditional_survival_transformed(&self, z: &[f64], points: &[f64], hazard_cap: f64) -> Result<SurvivalCurve> {
        self.check_z(z)?;
        let tau = self.spec.tau();
        if let Some(t) = points.iter().find(|t| !(0.0..=tau).contains(*t)) {
            return Err(Error::domain(format!("{t} outside [0, {tau}]")));
        }
        let surv: Vec<f64> = self.average_transformed(z, points).iter().map(|a| a.1).collect();
        SurvivalCurve::new(points.to_vec(), surv, hazard_cap)
    }
}

/// Averaged predictive CDF and density on a response grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpdResult {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum PointMode {
    Median,
    Quantile(f64),
}

impl PpdResult {
    /// Inverse CDF by linear interpolation on the grid; flat stretches
    /// resolve to their left end.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
        }
        let n = self.grid.len();
        if n < 2 || self.cdf.len() != n {
            return Err(Error::invalid("PPD needs at least two grid points"));
        }
        if !(self.cdf[0] <= q && q <= self.cdf[n - 1]) {
            return Err(Error::Extrapolation(format!(
                "level {q} not bracketed by the PPD on the grid ([{}, {}])",
                self.cdf[0],
                self.cdf[n - 1]
            )));
        }
        let k = self.cdf.partition_point(|&c| c < q).max(1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (g0, g1) = (self.grid[k - 1], self.grid[k]);
        if c1 <= c0 {
            return Ok(g0);
        }
        Ok(g0 + (q - c0) / (c1 - c0) * (g1 - g0))
    }

    /// [`quantile`](Self::quantile) with levels outside the grid's CDF range
    /// mapped to the nearest grid end; the flag reports the clipping.
    ///
    /// Bounded spline transforms leave part of the predictive mass at the
    /// upper edge of the transformed scale, so extreme levels may not be
    /// reached at any finite response.
    pub fn quantile_clipped(&self, q: f64) -> Result<(f64, bool)> {
        match self.quantile(q) {
            Ok(v) => Ok((v, false)),
            Err(Error::Extrapolation(_)) if q < self.cdf[0] => Ok((self.grid[0], true)),
            Err(Error::Extrapolation(_)) => Ok((self.grid[self.grid.len() - 1], true)),
            Err(e) => Err(e),
        }
    }

    pub fn predicted_value(&self, mode: PointMode) -> Result<f64> {
        match mode {
            PointMode::Median => self.quantile(0.5),
            PointMode::Quantile(q) => self.quantile(q),
        }
    }

    /// Central interval `[q_{(1-level)/2}, q_{(1+level)/2}]`.
    pub fn prediction_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("interval level {level} outside (0, 1)")));
        }
        Ok((self.quantile(0.5 * (1.0 - level))?, self.quantile(0.5 * (1.0 + level))?))
    }
}

/// Default cap on `-ln S` where the survival underflows.
pub const DEFAULT_HAZARD_CAP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
    /// Set when some `-ln S` exceeded the cap and was clipped.
    pub capped: bool,
}

impl SurvivalCurve {
    fn new(grid: Vec<f64>, survival: Vec<f64>, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::invalid("hazard cap must be positive"));
        }
        let mut capped = false;
        let cumulative_hazard = survival
            .iter()
            .map(|&s| {
                let v = -s.ln();
                if v > cap {
                    capped = true;
                    cap
                } else {
                    v.max(0.0)
                }
            })
            .collect();
        Ok(Self { grid, survival, cumulative_hazard, capped })
    }
}

/// 200-point grid: `[min - range/2, max + range/2]` for real responses and
/// `[0, 1.2 max]` for positive ones.
pub fn default_grid(values: &[f64], domain: Domain, n: usize) -> Result<Vec<f64>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid needs finite reference values"));
    }
    if n < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = match domain {
        Domain::Real => {
            let half = 0.5 * (hi - lo).max(1e-8);
            (lo - half, hi + half)
        }
        Domain::Positive => (0.0, 1.2 * hi),
    };
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaProjection {
    /// Unit-norm draws, in input order, minus dropped ones.
    pub draws: Vec<Vec<f64>>,
    /// Draws with norm below `1e-12`.
    pub dropped: usize,
    /// Mean projected draw rescaled to unit norm.
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// Order statistic by linear interpolation between closest ranks.
fn sample_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Maps every draw onto the unit sphere and summarizes it with central
/// intervals and a renormalized mean.
pub fn project_beta(betas: &[Vec<f64>], level: f64) -> Result<BetaProjection> {
    if betas.is_empty() {
        return Err(Error::invalid("no coefficient draws to project"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("interval level {level} outside (0, 1)")));
    }
    let p = betas[0].len();
    if p == 0 || betas.iter().any(|b| b.len() != p) {
        return Err(Error::invalid("coefficient draws must share a positive length"));
    }
    let mut draws = Vec::with_capacity(betas.len());
    let mut dropped = 0;
    for b in betas {
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= 1e-12) || !norm.is_finite() {
            dropped += 1;
            continue;
        }
        draws.push(b.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    if draws.is_empty() {
        return Err(Error::invalid("every coefficient draw has zero norm"));
    }
    if dropped > 0 {
        warn!("dropped {dropped} coefficient draw(s) with zero norm");
    }
    let m = draws.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
    let mean_norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let point = if mean_norm > 0.0 { mean.iter().map(|v| v / mean_norm).collect() } else { mean };
    let (mut lower, mut upper) = (Vec::with_capacity(p), Vec::with_capacity(p));
    for j in 0..p {
        let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(sample_quantile(&col, 0.5 * (1.0 - level)));
        upper.push(sample_quantile(&col, 0.5 * (1.0 + level)));
    }
    Ok(BetaProjection { draws, dropped, point, lower, upper, level })
}

/// Coefficient block of every stored draw.
pub fn beta_draws(chains: &ChainSet, layout: &Layout) -> Vec<Vec<f64>> {
    chains.flat_draws().map(|u| u[layout.beta()].to_vec()).collect()
}
