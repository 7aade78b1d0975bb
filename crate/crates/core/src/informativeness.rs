//! Prior-informativeness threshold and the adaptive tuning loop.
//!
//! The within-chain variance of `H` at a criterion knot must reach a lower
//! approximation of the posterior mode variance before the predictive chains
//! are trusted to mix. Raising the Weibull-scale rate shrinks that threshold.

use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, KnotSelection};
use crate::diagnostics::{bulk_ess, split_rank_normalized_rhat, within_chain_variance, ScalarChains};
use crate::error::{Error, Result};
use crate::model::{Dataset, Hyperparams, TransformationModel};
use crate::sampler::{run_chains, ChainSet, SamplerConfig};

/// Default scale-rate ladder; the alpha rate stays at its starting value.
pub const DEFAULT_ZETA_SCHEDULE: [f64; 4] = [0.01, 0.25, 0.5, 1.0];
pub const DEFAULT_ROUND_BUDGET: usize = 4;

/// Criterion knot chosen among the final interior knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionKnot {
    /// Quantile index `q0`, so the knot sits at the `q0 / N_I` quantile.
    pub q0: usize,
    /// 1-based position among the final (possibly interpolated) knots.
    pub j0: usize,
    pub knot: f64,
}

/// Smallest `q` in `0..n_initial` with `1 - q / n_initial < e^-1`.
pub fn criterion_quantile_index(n_initial: usize) -> Result<usize> {
    if n_initial < 2 {
        return Err(Error::invalid(format!("criterion knot needs N_I >= 2, got {n_initial}")));
    }
    let limit = (-1.0f64).exp();
    (0..n_initial)
        .find(|&q| 1.0 - (q as f64) / (n_initial as f64) < limit)
        .ok_or_else(|| Error::invalid(format!("no quantile knot lies above the 1 - 1/e level for N_I = {n_initial}")))
}

pub fn select_criterion_knot(knots: &KnotSelection) -> Result<CriterionKnot> {
    let q0 = criterion_quantile_index(knots.n_initial)?;
    let knot = *knots
        .initial
        .get(q0)
        .ok_or_else(|| Error::invalid(format!("knot selection has no quantile at index {q0}")))?;
    let pos = knots
        .knots
        .iter()
        .position(|&k| k == knot)
        .ok_or_else(|| Error::invalid("criterion quantile missing from the final knots"))?;
    Ok(CriterionKnot { q0, j0: pos + 1, knot })
}

/// `w_j' = B_{j0+j'}(s_j0) - B_{j0+j'}(s_{j0-1})` for `j' = 1..r`, with
/// `s_0 = 0`. Knot positions and basis indices are 1-based.
pub fn spline_weights_at_criterion_knot(spec: &BasisSpec, j0: usize) -> Result<Vec<f64>> {
    let knots = spec.interior_knots();
    if j0 == 0 || j0 > knots.len() {
        return Err(Error::invalid(format!("criterion index {j0} outside 1..={}", knots.len())));
    }
    let r = spec.order();
    let upper = spec.ispline(knots[j0 - 1]);
    let lower = if j0 >= 2 { spec.ispline(knots[j0 - 2]) } else { vec![0.0; spec.n_basis()] };
    Ok((1..=r).map(|jp| upper[j0 + jp - 1] - lower[j0 + jp - 1]).collect())
}

/// `1/d + 1/d^2` with `d = L zeta + eta / (j0 + sum(w))`.
pub fn prior_info_threshold(eta: f64, zeta: f64, truncation: usize, j0: usize, w: &[f64]) -> Result<f64> {
    if !(eta > 0.0 && zeta > 0.0 && eta.is_finite() && zeta.is_finite()) {
        return Err(Error::invalid(format!("threshold rates must be positive, got eta={eta}, zeta={zeta}")));
    }
    if truncation == 0 || j0 == 0 {
        return Err(Error::invalid("threshold needs L >= 1 and j0 >= 1"));
    }
    let d = truncation as f64 * zeta + eta / (j0 as f64 + w.iter().sum::<f64>());
    Ok(1.0 / d + 1.0 / (d * d))
}

/// Inclusive comparison `W >= threshold`.
pub fn check_sufficient(within_variance: f64, threshold: f64) -> bool {
    within_variance >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRound {
    pub eta: f64,
    pub zeta: f64,
    pub rho: f64,
    pub j0: usize,
    pub criterion_knot: f64,
    pub spline_weights: Vec<f64>,
    /// Within-chain variance of `H` at the criterion knot.
    pub within_variance: f64,
    pub threshold: f64,
    pub passed: bool,
    pub rhat_lp: f64,
    pub ess_lp: f64,
    pub divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub truncation: usize,
    pub rounds: Vec<TuningRound>,
    pub final_eta: f64,
    pub final_zeta: f64,
    /// Set when the budget ran out without a passing round.
    pub failed: bool,
}

impl TuningReport {
    pub fn last(&self) -> &TuningRound {
        self.rounds.last().expect("a report always holds at least one round")
    }

    /// Writes `zeta,threshold` samples at the final alpha rate plus the
    /// measured within-chain variances, for plotting the threshold curve.
    pub fn write_curve_csv<W: Write>(&self, out: W, zetas: &[f64]) -> Result<()> {
        let last = self.last();
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["kind", "zeta", "value"])?;
        for &z in zetas {
            let v = prior_info_threshold(self.final_eta, z, self.truncation, last.j0, &last.spline_weights)?;
            wtr.write_record(["threshold".to_string(), format!("{z:.16e}"), format!("{v:.16e}")])?;
        }
        for r in &self.rounds {
            wtr.write_record(["within_variance".to_string(), format!("{:.16e}", r.zeta), format!("{:.16e}", r.within_variance)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Log-spaced `zeta` values for the threshold curve.
pub fn curve_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp()).collect()
}

/// Report together with the artifacts of the last round.
#[derive(Debug, Clone)]
pub struct TuningOutcome {
    pub report: TuningReport,
    pub hyperparams: Hyperparams,
    pub knots: KnotSelection,
    pub model: TransformationModel,
    pub chains: ChainSet,
}

/// The `zeta` values tried: the starting value, then larger schedule entries.
pub fn round_candidates(start_zeta: f64, schedule: &[f64], budget: usize) -> Vec<f64> {
    let mut ladder: Vec<f64> = schedule.iter().copied().filter(|&z| z > start_zeta).collect();
    ladder.sort_by(f64::total_cmp);
    ladder.dedup();
    std::iter::once(start_zeta).chain(ladder).take(budget).collect()
}

/// Evaluates the criterion on one set of chains.
pub fn assess_round(
    model: &TransformationModel,
    knots: &KnotSelection,
    hp: &Hyperparams,
    chains: &ChainSet,
) -> Result<TuningRound> {
    let ck = select_criterion_knot(knots)?;
    let w = spline_weights_at_criterion_knot(model.spec(), ck.j0)?;
    let threshold = prior_info_threshold(hp.eta, hp.zeta, hp.truncation, ck.j0, &w)?;
    let h_index = model.layout().p + ck.j0 - 1;
    let h_chains = ScalarChains::new(chains.derived_scalar(h_index))?;
    let within_variance = within_chain_variance(&h_chains);
    let lp = ScalarChains::new(chains.lp.clone())?;
    Ok(TuningRound {
        eta: hp.eta,
        zeta: hp.zeta,
        rho: hp.rho,
        j0: ck.j0,
        criterion_knot: ck.knot,
        spline_weights: w,
        within_variance,
        threshold,
        passed: check_sufficient(within_variance, threshold),
        rhat_lp: split_rank_normalized_rhat(&lp)?,
        ess_lp: bulk_ess(&lp)?.value,
        divergences: chains.divergences(),
    })
}

/// Samples with increasing `zeta` until the within-chain variance at the
/// criterion knot reaches the threshold or the budget is spent.
pub fn tune(data: &Dataset, hp0: &Hyperparams, schedule: &[f64], budget: usize, cfg: &SamplerConfig) -> Result<TuningOutcome> {
    if budget == 0 {
        return Err(Error::invalid("tuning budget must be at least 1"));
    }
    if schedule.is_empty() {
        return Err(Error::invalid("tuning schedule is empty"));
    }
    if let Some(z) = schedule.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
        return Err(Error::invalid(format!("schedule entries must be positive, got {z}")));
    }
    hp0.validate()?;
    cfg.validate()?;
    let (knots, model0) = TransformationModel::from_data(data, hp0)?;
    let mut rounds = Vec::new();
    let mut last = None;
    for zeta in round_candidates(hp0.zeta, schedule, budget) {
        let hp = Hyperparams { zeta, ..hp0.clone() };
        let model = TransformationModel::new(data, model0.spec(), &hp)?;
        let chains = run_chains(&model, cfg, None)?;
        let round = assess_round(&model, &knots, &hp, &chains)?;
        info!(
            "tuning round {}: zeta={} W={:.4e} threshold={:.4e} passed={} lp R-hat={:.3}",
            rounds.len() + 1,
            zeta,
            round.within_variance,
            round.threshold,
            round.passed,
            round.rhat_lp
        );
        let passed = round.passed;
        rounds.push(round);
        last = Some((hp, model, chains));
        if passed {
            break;
        }
    }
    let (hp, model, chains) = last.expect("at least one round ran");
    let report = TuningReport {
        truncation: hp.truncation,
        failed: !rounds.last().is_some_and(|r| r.passed),
        final_eta: hp.eta,
        final_zeta: hp.zeta,
        rounds,
    };
    Ok(TuningOutcome { report, hyperparams: hp, knots, model, chains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::select_quantile_knots;
    use crate::model::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn criterion_index_by_direct_inequality() {
        assert_eq!(criterion_quantile_index(4).unwrap(), 3);
        assert_eq!(criterion_quantile_index(10).unwrap(), 7);
        assert!(criterion_quantile_index(2).is_err());
        assert!(criterion_quantile_index(1).is_err());
        for n in 3..60usize {
            let q = criterion_quantile_index(n).unwrap();
            let e = (-1.0f64).exp();
            assert!(1.0 - (q as f64) / (n as f64) < e);
            assert!(1.0 - (q - 1) as f64 / n as f64 >= e);
        }
    }

    fn sample_selection(seed: u64) -> KnotSelection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..200).map(|_| 0.2 + 4.6 * rng.random::<f64>()).collect();
        select_quantile_knots(&y, 4).unwrap()
    }

    #[test]
    fn criterion_knot_is_smallest_knot_above_level() {
        let sel = sample_selection(1);
        let ck = select_criterion_knot(&sel).unwrap();
        assert_eq!(ck.j0, 4);
        assert_eq!(ck.knot, sel.initial[3]);
        // interpolated knots shift the 1-based position
        let mut shifted = sel.clone();
        shifted.knots.insert(1, 0.5 * (sel.knots[0] + sel.knots[1]));
        assert_eq!(select_criterion_knot(&shifted).unwrap().j0, 5);
    }

    #[test]
    fn weights_match_direct_basis_evaluation() {
        let sel = sample_selection(2);
        let spec = BasisSpec::new(&sel.knots, 4, 5.0).unwrap();
        let ck = select_criterion_knot(&sel).unwrap();
        let w = spline_weights_at_criterion_knot(&spec, ck.j0).unwrap();
        assert_eq!(w.len(), 4);
        let hi = spec.ispline(sel.knots[ck.j0 - 1]);
        let lo = spec.ispline(sel.knots[ck.j0 - 2]);
        for (jp, wv) in w.iter().enumerate() {
            assert_eq!(*wv, hi[ck.j0 + jp] - lo[ck.j0 + jp]);
            assert!((0.0..=1.0).contains(wv));
        }
        // first knot uses the left boundary, where every I-spline is zero
        let w1 = spline_weights_at_criterion_knot(&spec, 1).unwrap();
        let direct = spec.ispline(sel.knots[0]);
        assert_eq!(w1, direct[1..5].to_vec());
        assert!(spline_weights_at_criterion_knot(&spec, 0).is_err());
        assert!(spline_weights_at_criterion_knot(&spec, 5).is_err());
    }

    #[test]
    fn threshold_examples() {
        let v = prior_info_threshold(1e-300, 1.0, 1, 1, &[0.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!(prior_info_threshold(0.0, 1.0, 1, 1, &[]).is_err());
        assert!(prior_info_threshold(0.1, 1.0, 1, 0, &[]).is_err());
    }

    #[test]
    fn threshold_strictly_decreasing_on_grid() {
        let w = [0.3, 0.6, 0.2, 0.05];
        let grid: Vec<f64> = (0..20).map(|i| 0.01 * 1.35f64.powi(i)).collect();
        for &eta in &grid {
            for pair in grid.windows(2) {
                let a = prior_info_threshold(eta, pair[0], 12, 3, &w).unwrap();
                let b = prior_info_threshold(eta, pair[1], 12, 3, &w).unwrap();
                assert!(b < a);
                let a = prior_info_threshold(pair[0], eta, 12, 3, &w).unwrap();
                let b = prior_info_threshold(pair[1], eta, 12, 3, &w).unwrap();
                assert!(b < a);
            }
        }
    }

    #[test]
    fn zeta_dominates_eta_sensitivity() {
        let w = [0.3, 0.6, 0.2, 0.05];
        let h = 1e-6;
        let f = |e: f64, z: f64| prior_info_threshold(e, z, 12, 3, &w).unwrap();
        let dz = (f(0.01, 0.25 + h) - f(0.01, 0.25 - h)) / (2.0 * h);
        let de = (f(0.01 + h, 0.25) - f(0.01 - h, 0.25)) / (2.0 * h);
        assert!(dz.abs() > de.abs());
    }

    #[test]
    fn sufficiency_is_inclusive() {
        assert!(check_sufficient(0.7, 0.7));
        assert!(!check_sufficient(0.0, 0.7));
        assert!(check_sufficient(1.4, 0.7));
    }

    #[test]
    fn candidates_follow_the_ladder() {
        assert_eq!(round_candidates(0.01, &DEFAULT_ZETA_SCHEDULE, 4), vec![0.01, 0.25, 0.5, 1.0]);
        assert_eq!(round_candidates(0.25, &DEFAULT_ZETA_SCHEDULE, 4), vec![0.25, 0.5, 1.0]);
        assert_eq!(round_candidates(0.01, &DEFAULT_ZETA_SCHEDULE, 2), vec![0.01, 0.25]);
    }

    fn small_dataset() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
        let y: Vec<f64> = z.iter().map(|r| r[0] - 0.5 * r[1] + 0.3 * (rng.random::<f64>() - 0.5)).collect();
        Dataset::new(y, None, z, Domain::Real, 5.0).unwrap()
    }

    #[test]
    fn report_is_self_consistent() {
        let data = small_dataset();
        let hp = Hyperparams { truncation: 4, ..Hyperparams::default() };
        let cfg = SamplerConfig { chains: 2, warmup: 150, draws: 100, seed: 3, ..SamplerConfig::default() };
        let out = tune(&data, &hp, &[1.0, 5.0], 2, &cfg).unwrap();
        let rep = &out.report;
        assert!(!rep.rounds.is_empty() && rep.rounds.len() <= 2);
        for r in &rep.rounds {
            let v = prior_info_threshold(r.eta, r.zeta, rep.truncation, r.j0, &r.spline_weights).unwrap();
            assert_eq!(v, r.threshold);
            assert_eq!(r.passed, r.within_variance >= r.threshold);
        }
        for pair in rep.rounds.windows(2) {
            assert!(pair[1].zeta > pair[0].zeta);
            assert!(pair[1].threshold < pair[0].threshold);
        }
        assert_eq!(rep.failed, !rep.last().passed);
        assert_eq!(rep.final_zeta, rep.last().zeta);
        let mut buf = Vec::new();
        rep.write_curve_csv(&mut buf, &curve_grid(0.01, 1.0, 5)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 + rep.rounds.len());
        assert!(tune(&data, &hp, &[], 2, &cfg).is_err());
        assert!(tune(&data, &hp, &[0.5], 0, &cfg).is_err());
    }
}
