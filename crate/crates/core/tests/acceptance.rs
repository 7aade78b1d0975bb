//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the target;
//! every other failure does. Pass criterion numbers as arguments to run a
//! subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ultm::basis::{eval_h, BasisSpec};
use ultm::cli::evaluate_setting;
use ultm::config::RunConfig;
use ultm::diagnostics::{bulk_ess, split_rank_normalized_rhat, ScalarChains};
use ultm::eval::{c_index, generate, ibs, Setting, SimSpec};
use ultm::inference::{default_grid, project_beta};
use ultm::informativeness::{
    criterion_quantile_index, prior_info_threshold, select_criterion_knot, spline_weights_at_criterion_knot, tune,
    DEFAULT_ROUND_BUDGET, DEFAULT_ZETA_SCHEDULE,
};
use ultm::mixture::{truncation_error_bound, WeibullMixture};
use ultm::model::{Hyperparams, TransformationModel};
use ultm::sampler::{run_chains, LogDensity, SamplerConfig};

/// Criteria that do not reproduce; see the project notes for the analysis.
const KNOWN_RED: &[usize] = &[1];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn criterion_1() -> Outcome {
    let schedule = DEFAULT_ZETA_SCHEDULE;
    let (mut before_ok, mut after_ok) = (0, 0);
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let sim = generate(&SimSpec::new(Setting::A2, 200, 20, seed)).unwrap();
        let data = sim.train.dataset(5.0).unwrap();
        let hp0 = Hyperparams { eta: 0.01, zeta: 0.01, rho: 1.0, ..Hyperparams::default() };
        let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
        let out = tune(&data, &hp0, &schedule, DEFAULT_ROUND_BUDGET, &cfg).unwrap();
        let rounds = &out.report.rounds;
        let first = &rounds[0];
        let last = out.report.last();
        let before = !first.passed && first.rhat_lp > 1.05;
        let landed = rounds.len() > 1 && (last.zeta == 0.25 || last.zeta == 0.5);
        let after = landed && last.passed && last.rhat_lp <= 1.02 && last.ess_lp >= 300.0;
        before_ok += usize::from(before);
        after_ok += usize::from(after);
        lines.push(format!(
            "seed {seed}: start W={:.1} thr={:.2} passed={} rhat={:.3}; final zeta={} passed={} rhat={:.3} ess={:.0} rounds={}",
            first.within_variance,
            first.threshold,
            first.passed,
            first.rhat_lp,
            last.zeta,
            last.passed,
            last.rhat_lp,
            last.ess_lp,
            rounds.len()
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    Outcome::new(
        before_ok >= 7 && after_ok >= 8,
        format!("start fails with lp R-hat > 1.05 in {before_ok}/10 (need 7); tuned run mixes in {after_ok}/10 (need 8)"),
    )
}

fn criterion_2() -> Outcome {
    let a = criterion_quantile_index(4).unwrap();
    let b = criterion_quantile_index(10).unwrap();
    // direct evaluation of the defining inequality
    let direct = |n: usize| (1..=n).find(|&q| 1.0 - (q as f64) / (n as f64) < (-1.0f64).exp()).unwrap();
    Outcome::new(a == 3 && b == 7 && direct(4) == 3 && direct(10) == 7, format!("q0(4)={a}, q0(10)={b}"))
}

/// Criterion-knot quantities of a seeded a1 sample.
fn criterion_setup() -> (usize, Vec<f64>) {
    let sim = generate(&SimSpec::new(Setting::A1, 200, 10, 1)).unwrap();
    let data = sim.train.dataset(5.0).unwrap();
    let (knots, spec) = data.build_basis(&Hyperparams::default()).unwrap();
    let ck = select_criterion_knot(&knots).unwrap();
    let w = spline_weights_at_criterion_knot(&spec, ck.j0).unwrap();
    (ck.j0, w)
}

fn criterion_3() -> Outcome {
    let (j0, w) = criterion_setup();
    let v = |eta: f64, zeta: f64| prior_info_threshold(eta, zeta, 12, j0, &w).unwrap();
    let axis: Vec<f64> = (0..20).map(|i| 0.005 * (1.0f64 / 0.005).powf(i as f64 / 19.0)).collect();
    let mut monotone = true;
    for i in 0..20 {
        for k in 1..20 {
            monotone &= v(axis[k], axis[i]) < v(axis[k - 1], axis[i]);
            monotone &= v(axis[i], axis[k]) < v(axis[i], axis[k - 1]);
        }
    }
    let h = 1e-6;
    let d_zeta = (v(0.01, 0.25 + h) - v(0.01, 0.25 - h)) / (2.0 * h);
    let d_eta = (v(0.01 + h, 0.25) - v(0.01 - h, 0.25)) / (2.0 * h);
    Outcome::new(
        monotone && d_zeta.abs() > d_eta.abs(),
        format!("strictly decreasing on 20x20: {monotone}; dV/dzeta={d_zeta:.4e}, dV/deta={d_eta:.4e} (j0={j0})"),
    )
}

fn criterion_4() -> Outcome {
    let sim = generate(&SimSpec::new(Setting::A1, 30, 5, 7)).unwrap();
    let data = sim.train.dataset(5.0).unwrap();
    let (_, model) = TransformationModel::from_data(&data, &Hyperparams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut grad = vec![0.0; model.dim()];
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        model.logp_grad(&u, &mut grad);
        let mut x = u.clone();
        for d in 0..u.len() {
            let h = 1e-5;
            x[d] = u[d] + h;
            let up = model.logp(&x);
            x[d] = u[d] - h;
            let down = model.logp(&x);
            x[d] = u[d];
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[d]).abs() / grad[d].abs().max(1.0));
        }
    }
    Outcome::new(worst < 1e-5, format!("max relative error {worst:.2e} over 100 points x {} coordinates", model.dim()))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tau = 5.0;
    let spec = BasisSpec::new(&[0.9, 1.8, 2.7, 3.6], 4, tau).unwrap();
    let k = spec.n_basis();
    let at_zero = spec.ispline(0.0);
    let at_tau = spec.ispline(tau);
    let zero_ok = at_zero.iter().all(|&v| v == 0.0);
    let one_ok = at_tau.iter().all(|&v| (v - 1.0).abs() <= 1e-15);
    let mut h0_ok = true;
    let mut monotone = true;
    for _ in 0..1000 {
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
        h0_ok &= eval_h(&alpha, &spec, 0.0).unwrap() == 0.0;
        let mut s: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..tau)).collect();
        s.sort_by(f64::total_cmp);
        let h: Vec<f64> = s.iter().map(|&x| eval_h(&alpha, &spec, x).unwrap()).collect();
        monotone &= h.windows(2).all(|p| p[1] >= p[0]);
    }
    // composite Simpson on a uniform mesh, ignoring where the breakpoints are
    let m = 4000;
    let step = tau / m as f64;
    let mut worst = 0.0f64;
    let mut acc = vec![0.0; k];
    for i in 0..m / 2 {
        let a = 2.0 * i as f64 * step;
        let (fa, fm, fb) = (spec.mspline(a), spec.mspline(a + step), spec.mspline(a + 2.0 * step));
        for j in 0..k {
            acc[j] += step / 3.0 * (fa[j] + 4.0 * fm[j] + fb[j]);
        }
        if i % 100 == 99 {
            let target = spec.ispline(a + 2.0 * step);
            for j in 0..k {
                worst = worst.max((acc[j] - target[j]).abs());
            }
        }
    }
    Outcome::new(
        zero_ok && one_ok && h0_ok && monotone && worst < 1e-6,
        format!("B(0)=0: {zero_ok}, B(tau)=1: {one_ok}, H(0)=0: {h0_ok}, monotone: {monotone}, max |int M - B| = {worst:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_cdf, mut worst_log) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let l = rng.random_range(1..=12);
        let raw: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let scales: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..5.0)).collect();
        let shapes: Vec<f64> = (0..l).map(|_| rng.random_range(0.3..4.0)).collect();
        let mix = WeibullMixture::new(w.clone(), scales.clone(), shapes.clone()).unwrap();
        let x = scales[rng.random_range(0..l)] * rng.random_range(0.3..2.0);
        let mut cdf = 0.0;
        let mut pdf = 0.0;
        for j in 0..l {
            let z = (x / scales[j]).powf(shapes[j]);
            cdf += w[j] * (1.0 - (-z).exp());
            pdf += w[j] * shapes[j] / scales[j] * (x / scales[j]).powf(shapes[j] - 1.0) * (-z).exp();
        }
        worst_cdf = worst_cdf.max((mix.cdf(x).unwrap() - cdf).abs());
        worst_log = worst_log.max((mix.logpdf(x).unwrap() - pdf.ln()).abs());
    }
    let bound = truncation_error_bound(600, 12, 1.0).unwrap();
    let expected = 2400.0 * (-11.0f64).exp();
    let bound_ok = (bound - expected).abs() <= 4.0 * f64::EPSILON * expected;
    Outcome::new(
        worst_cdf < 1e-12 && worst_log < 1e-12 && bound_ok,
        format!("max cdf error {worst_cdf:.2e}, max logpdf error {worst_log:.2e}, bound {bound:.17e} vs {expected:.17e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let iid: Vec<Vec<f64>> = (0..4).map(|_| (0..1000).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let sc = ScalarChains::new(iid).unwrap();
    let rhat = split_rank_normalized_rhat(&sc).unwrap();
    let ess = bulk_ess(&sc).unwrap().value;
    let phi: f64 = 0.9;
    let sd = (1.0 - phi * phi).sqrt();
    let ar: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut x: f64 = rng.sample(StandardNormal);
            (0..1000)
                .map(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    x = phi * x + sd * e;
                    x
                })
                .collect()
        })
        .collect();
    let ar_ess = bulk_ess(&ScalarChains::new(ar).unwrap()).unwrap().value;
    let analytic = 4000.0 * (1.0 - phi) / (1.0 + phi);
    let pass = (0.999..=1.01).contains(&rhat)
        && (ess - 4000.0).abs() <= 0.2 * 4000.0
        && (ar_ess - analytic).abs() <= 0.3 * analytic;
    Outcome::new(pass, format!("iid R-hat {rhat:.4}, ESS {ess:.0}; AR(1) ESS {ar_ess:.0} vs {analytic:.0}"))
}

struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn logp(&self, x: &[f64]) -> f64 {
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        self.logp(x)
    }
}

fn criterion_8() -> Outcome {
    let target = StdNormal(10);
    let cfg = SamplerConfig { seed: 8, ..SamplerConfig::default() };
    let a = run_chains(&target, &cfg, None).unwrap();
    let b = run_chains(&target, &cfg, None).unwrap();
    let n = (a.n_chains() * a.n_draws()) as f64;
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for d in 0..10 {
        let xs: Vec<f64> = a.flat_draws().map(|x| x[d]).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    let identical = a.draws == b.draws && a.lp == b.lp;
    Outcome::new(
        worst_mean <= 0.1 && worst_var <= 0.15 && a.divergences() == 0 && identical,
        format!(
            "max |mean| {worst_mean:.3}, max |var-1| {worst_var:.3}, divergences {}, bit-identical rerun {identical}",
            a.divergences()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let betas: Vec<Vec<f64>> =
        (0..2000).map(|_| (0..4).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let proj = project_beta(&betas, 0.95).unwrap();
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    let mut unit = true;
    let mut argmax_ok = true;
    for (b, d) in betas.iter().zip(&proj.draws) {
        unit &= (d.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12;
        argmax_ok &= argmax(b) == argmax(d);
    }
    let simple = project_beta(&[vec![3.0, 4.0]], 0.95).unwrap();
    let exact = simple.draws[0] == vec![0.6, 0.8];
    Outcome::new(
        unit && argmax_ok && exact && proj.dropped == 0,
        format!("unit norm: {unit}, argmax preserved: {argmax_ok}, (3,4) -> {:?}", simple.draws[0]),
    )
}

fn criterion_11() -> Outcome {
    let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.37).collect();
    let all = vec![true; times.len()];
    let perfect = c_index(&times, &times, &all).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut brute_ok = true;
    for _ in 0..500 {
        let t: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: Vec<f64> = (0..8).map(|_| (rng.random_range(0.0..1.0f64) * 4.0).floor()).collect();
        let d: Vec<bool> = (0..8).map(|_| rng.random_bool(0.6)).collect();
        let (mut comparable, mut concordant) = (0.0, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                if t[i] < t[j] && d[i] {
                    comparable += 1.0;
                    concordant += if s[i] < s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let got = c_index(&s, &t, &d);
        brute_ok &= match got {
            Ok(v) => comparable > 0.0 && (v - concordant / comparable).abs() < 1e-12,
            Err(_) => comparable == 0.0,
        };
    }

    let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    let curves = vec![vec![0.5; grid.len()]; times.len()];
    let brier = ibs(&curves, &grid, &times, &all, 7.4).unwrap();
    Outcome::new(
        perfect == 1.0 && brute_ok && brier.value == 0.25,
        format!("perfect C-index {perfect}, brute-force agreement {brute_ok}, IBS of constant 1/2 = {}", brier.value),
    )
}

fn criterion_10() -> Outcome {
    let (mut wins, mut covered, mut total) = (0, 0.0, 0.0);
    for seed in 1..=10u64 {
        let cfg = RunConfig { setting: Setting::A1, n: 200, seed, ..RunConfig::default() };
        let report = evaluate_setting(&cfg, false).unwrap();
        let m = &report.metrics;
        let (mae, base, cov) = (m.mae.unwrap(), m.baseline_mae.unwrap(), m.coverage.unwrap());
        wins += usize::from(mae < base);
        covered += cov * m.n_test as f64;
        total += m.n_test as f64;
        println!(
            "    seed {seed}: MAE {mae:.3} vs baseline {base:.3}, coverage {cov:.2}, clipped quantiles {}, divergences {}",
            m.clipped,
            report.divergences.unwrap_or(0)
        );
    }
    let pooled = covered / total;
    Outcome::new(
        wins >= 9 && (0.85..=1.0).contains(&pooled),
        format!("MAE beats baseline in {wins}/10 (need 9); pooled coverage {pooled:.3} (need [0.85, 1])"),
    )
}

fn criterion_12() -> Outcome {
    let sim = generate(&SimSpec::new(Setting::B1, 200, 20, 12)).unwrap();
    let data = sim.train.dataset(5.0).unwrap();
    let hp = Hyperparams::default();
    let (knots, model) = TransformationModel::from_data(&data, &hp).unwrap();

    // independent recount of the CDF gaps at the initial knots
    let all: Vec<f64> = data.y_tilde().to_vec();
    let unc: Vec<f64> = all.iter().zip(data.delta()).filter(|(_, &d)| d).map(|(&t, _)| t).collect();
    let ecdf = |v: &[f64], s: f64| v.iter().filter(|&&x| x <= s).count() as f64 / v.len() as f64;
    let gaps: Vec<f64> = knots.initial.iter().map(|&s| (ecdf(&all, s) - ecdf(&unc, s)).abs()).collect();
    let wide = gaps.iter().filter(|&&g| g >= 0.05).count();
    let triggered = wide > 0 && knots.inserted.len() == wide;

    let chains = run_chains(&model, &SamplerConfig { seed: 12, ..SamplerConfig::default() }, None).unwrap();
    let posterior = ultm::inference::Posterior::from_chains(&chains, model.spec(), &model.layout()).unwrap();
    let grid = default_grid(&sim.test.y, sim.test.domain, 100).unwrap();
    let (mut monotone, mut identity) = (true, 0.0f64);
    for z in &sim.test.z {
        let curve = posterior.conditional_survival(z, &grid, 700.0).unwrap();
        monotone &= curve.survival.windows(2).all(|p| p[1] <= p[0]);
        for (s, h) in curve.survival.iter().zip(&curve.cumulative_hazard) {
            if *h < 700.0 {
                identity = identity.max((h + s.ln()).abs());
            }
        }
    }
    Outcome::new(
        triggered && monotone && identity <= 1e-12,
        format!(
            "censoring {:.2}, gaps {:?}, inserted {} knot(s); survival monotone: {monotone}; max |L + ln S| {identity:.1e}; divergences {}",
            data.censoring_rate(),
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>(),
            knots.inserted.len(),
            chains.divergences()
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "tuning restores mixing", criterion_1),
        (2, "criterion-knot index", criterion_2),
        (3, "threshold monotonicity", criterion_3),
        (4, "gradient vs finite differences", criterion_4),
        (5, "basis invariants", criterion_5),
        (6, "mixture oracle", criterion_6),
        (7, "diagnostics oracle", criterion_7),
        (8, "sampler oracle", criterion_8),
        (9, "coefficient projection", criterion_9),
        (10, "predictive accuracy vs baseline", criterion_10),
        (11, "survival metrics", criterion_11),
        (12, "censored end-to-end run", criterion_12),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        let note = if !outcome.pass && KNOWN_RED.contains(&id) { " (known red)" } else { "" };
        println!(
            "criterion {id:>2} {verdict}{note}: {name}: {} [{:.0}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
