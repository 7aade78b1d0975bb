//! Subcommands behind the `ultm` binary. Each reads a [`RunConfig`], applies
//! flag overrides, and writes its artifacts under `output`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::basis::{AdditiveExpansion, ExpansionFamily, KnotSelection};
use crate::config::RunConfig;
use crate::diagnostics::{summarize, Summary};
use crate::error::{Error, Result};
use crate::eval::{assess, generate, AssessOptions, Metrics, Predictor, Setting, SimData};
use crate::inference::{
    beta_draws, default_grid, DEFAULT_HAZARD_CAP, project_beta, BetaProjection, Posterior, PpdResult, SurvivalCurve,
};
use crate::informativeness::{curve_grid, tune, TuningReport};
use crate::io::{
    self, num, read_covariates, read_draws, read_table, write_draws, write_json, write_ppd_curves,
    write_sim_data, write_truth_grid, DrawTable, FittedModel,
};
use crate::model::{Dataset, Domain, Layout, TransformationModel};
use crate::sampler::{run_chains, ChainSet, ChainStats};

/// Fraction of divergent transitions above which a run is reported as pathological.
pub const MAX_DIVERGENCE_FRACTION: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "ultm", version, about = "Bayesian predictive inference for linear transformation models")]
pub struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test CSVs and the true predictive curves for a setting.
    Simulate(Overrides),
    /// Fit the model to `input` and write draws, diagnostics and the model file.
    Fit(Overrides),
    /// Raise the scale-prior rate until the informativeness check passes, then fit.
    Tune(Overrides),
    /// Predictive curves, point predictions and intervals for `covariates`.
    Predict(Overrides),
    /// Score a fitted posterior or the true law on a simulated setting.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        /// Use the generating law as the predictor instead of fitting.
        #[arg(long)]
        oracle: bool,
    },
    /// Recompute convergence diagnostics from a draws file.
    Diagnose(Overrides),
}

/// One flag per config key.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub n_initial: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub beta_prior_sd: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_tree_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub grid_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub hazard_cap: Option<f64>,
    #[arg(long)]
    pub domain: Option<Domain>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub expansion: Option<ExpansionFamily>,
    #[arg(long)]
    pub expansion_size: Option<usize>,
    #[arg(long)]
    pub response_scale: Option<f64>,
    #[arg(long)]
    pub setting: Option<Setting>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = Some(v.clone()); })*
            };
        }
        set!(eta, zeta, rho, c, truncation, n_initial, order, tau, chains, warmup, draws, target_accept);
        set!(max_tree_depth, seed, schedule, budget, grid_points, level, hazard_cap, domain, output);
        set!(expansion_size, response_scale, setting, n, n_test);
        set_opt!(beta_prior_sd, grid_min, grid_max, input, covariates, model_dir, expansion);
    }
}

/// How a command that produced its artifacts ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    TuningFailed,
    Pathology,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::TuningFailed => 3,
            Status::Pathology => 4,
        }
    }
}

/// Exit code for a failed command: 2 for invalid configuration or data, 1 otherwise.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_)
        | Error::Domain(_)
        | Error::DegenerateKnots(_)
        | Error::Data(_)
        | Error::RankDeficient { .. }
        | Error::Config(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Loads the config file (or defaults), applies flags and validates.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Status> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Simulate(o) => cmd_simulate(&resolve_config(config, o)?),
        Command::Fit(o) => cmd_fit(&resolve_config(config, o)?),
        Command::Tune(o) => cmd_tune(&resolve_config(config, o)?),
        Command::Predict(o) => cmd_predict(&resolve_config(config, o)?),
        Command::Evaluate { overrides, oracle } => cmd_evaluate(&resolve_config(config, overrides)?, *oracle),
        Command::Diagnose(o) => cmd_diagnose(&resolve_config(config, o)?),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub setting: Setting,
    pub seed: u64,
    pub n: usize,
    pub n_test: usize,
    pub domain: Domain,
    pub train_censoring_rate: f64,
    pub test_censoring_rate: f64,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Status> {
    let sim = generate(&cfg.sim_spec())?;
    let out = &cfg.output;
    write_sim_data(&out.join("train.csv"), &sim.train)?;
    write_sim_data(&out.join("test.csv"), &sim.test)?;
    let grid = default_grid(&sim.test.y, sim.test.domain, cfg.grid_points)?;
    write_truth_grid(&out.join("truth_grid.csv"), &sim.truth, &sim.test, &grid)?;
    let report = SimulationReport {
        setting: cfg.setting,
        seed: cfg.seed,
        n: cfg.n,
        n_test: cfg.n_test,
        domain: sim.train.domain,
        train_censoring_rate: sim.train.censoring_rate(),
        test_censoring_rate: sim.test.censoring_rate(),
    };
    write_json(&out.join("simulation.json"), &report)?;
    println!("simulated {} into {}", cfg.setting, out.display());
    Ok(Status::Success)
}

/// A fitted model with its retained draws.
#[derive(Debug, Clone)]
pub struct Fit {
    pub knots: KnotSelection,
    pub model: TransformationModel,
    pub chains: ChainSet,
}

impl Fit {
    pub fn posterior(&self) -> Result<Posterior> {
        Posterior::from_chains(&self.chains, self.model.spec(), &self.model.layout())
    }
}

/// Knot selection, basis construction and sampling with the configured settings.
pub fn fit_dataset(data: &Dataset, cfg: &RunConfig) -> Result<Fit> {
    let (knots, model) = TransformationModel::from_data(data, &cfg.hyperparams())?;
    if !knots.inserted.is_empty() {
        info!("inserted {} knot(s) into wide CDF gaps", knots.inserted.len());
    }
    let chains = run_chains(&model, &cfg.sampler(), None)?;
    Ok(Fit { knots, model, chains })
}

/// Training data read from `input`, with the covariate expansion applied.
struct Prepared {
    table: io::Table,
    expansion: Option<AdditiveExpansion>,
    data: Dataset,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let input = cfg.input.as_deref().ok_or_else(|| Error::Config("`input` is required".into()))?;
    let table = read_table(input)?;
    let expansion = match cfg.expansion {
        Some(family) => Some(AdditiveExpansion::fit(&table.z, family, cfg.expansion_size)?),
        None => None,
    };
    let z = match &expansion {
        Some(e) => e.transform(&table.z)?,
        None => table.z.clone(),
    };
    let y = table.y.iter().map(|v| v / cfg.response_scale).collect();
    let data = Dataset::new(y, table.status.clone(), z, cfg.domain, cfg.tau)?;
    Ok(Prepared { table, expansion, data })
}

/// Diagnostics for `lp`, every `H(s_j)` and every coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergences: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_fraction: Option<f64>,
    pub scalars: Vec<Summary>,
}

pub fn diagnostics_from_chains(chains: &ChainSet, model: &TransformationModel) -> Result<DiagnosticsReport> {
    let mut scalars = vec![summarize("lp", chains.lp.clone())?];
    let names = model.derived_names();
    // H first, then beta, to match the draws-file ordering of the report
    let p = model.layout().p;
    for idx in (p..names.len()).chain(0..p) {
        scalars.push(summarize(names[idx].clone(), chains.derived_scalar(idx))?);
    }
    Ok(DiagnosticsReport {
        chains: chains.n_chains(),
        draws_per_chain: chains.n_draws(),
        divergences: Some(chains.divergences()),
        divergence_fraction: Some(chains.divergence_fraction()),
        scalars,
    })
}

pub fn diagnostics_from_table(table: &DrawTable) -> Result<DiagnosticsReport> {
    let lp = table.by_chain(&table.lp);
    let mut scalars = vec![summarize("lp", lp.clone())?];
    for j in 0..table.n_knots {
        let col: Vec<f64> = table.h.iter().map(|h| h[j]).collect();
        scalars.push(summarize(format!("H_s{}", j + 1), table.by_chain(&col))?);
    }
    let betas = table.betas();
    for j in 0..table.layout.p {
        let col: Vec<f64> = betas.iter().map(|b| b[j]).collect();
        scalars.push(summarize(format!("beta_{}", j + 1), table.by_chain(&col))?);
    }
    Ok(DiagnosticsReport {
        chains: lp.len(),
        draws_per_chain: lp.first().map_or(0, Vec::len),
        divergences: None,
        divergence_fraction: None,
        scalars,
    })
}

fn print_diagnostics(report: &DiagnosticsReport) {
    println!("{:<10} {:>24} {:>24} {:>24}", "scalar", "rhat", "ess", "W");
    for s in &report.scalars {
        println!("{:<10} {:>24} {:>24} {:>24}", s.name, num(s.rhat), num(s.ess), num(s.w));
    }
}

/// Everything `fit` records about a run besides the draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n: usize,
    pub p: usize,
    pub censoring_rate: f64,
    pub layout: Layout,
    pub knots: KnotSelection,
    pub divergences: usize,
    pub divergence_fraction: f64,
    pub chain_stats: Vec<ChainStats>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningReport>,
}

/// Writes draws, model file, diagnostics, coefficient projection and run report.
fn write_fit_artifacts(cfg: &RunConfig, prep: &Prepared, fit: &Fit, tuning: Option<TuningReport>) -> Result<Status> {
    let out = &cfg.output;
    let Fit { knots, model, chains } = fit;
    write_draws(&out.join("draws.csv"), chains, model)?;
    let fitted = FittedModel {
        domain: cfg.domain,
        hyperparams: model.hyperparams().clone(),
        knots: knots.clone(),
        basis: model.spec().clone(),
        covariate_names: prep.table.covariate_names.clone(),
        expansion: prep.expansion.clone(),
        censoring_rate: prep.data.censoring_rate(),
        response_range: (
            prep.table.y.iter().copied().fold(f64::INFINITY, f64::min),
            prep.table.y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        response_scale: cfg.response_scale,
    };
    write_json(&out.join("model.json"), &fitted)?;
    let diag = diagnostics_from_chains(chains, model)?;
    write_json(&out.join("diagnostics.json"), &diag)?;
    let projection = project_beta(&beta_draws(chains, &model.layout()), cfg.level)?;
    write_json(&out.join("beta_projection.json"), &projection)?;
    let report = RunReport {
        config: cfg.clone(),
        n: prep.data.n(),
        p: prep.data.p(),
        censoring_rate: prep.data.censoring_rate(),
        layout: model.layout(),
        knots: knots.clone(),
        divergences: chains.divergences(),
        divergence_fraction: chains.divergence_fraction(),
        chain_stats: chains.stats.clone(),
        warnings: chains.warnings.clone(),
        tuning,
    };
    write_json(&out.join("report.json"), &report)?;
    print_diagnostics(&diag);
    print_projection(&projection);
    println!("wrote fit artifacts to {}", out.display());
    if chains.divergence_fraction() > MAX_DIVERGENCE_FRACTION {
        warn!("{} divergent transitions ({:.1}%)", chains.divergences(), 100.0 * chains.divergence_fraction());
        return Ok(Status::Pathology);
    }
    Ok(Status::Success)
}

fn print_projection(p: &BetaProjection) {
    println!("{:<10} {:>24} {:>24} {:>24}", "beta", "point", "lower", "upper");
    for j in 0..p.point.len() {
        println!("{:<10} {:>24} {:>24} {:>24}", format!("beta_{}", j + 1), num(p.point[j]), num(p.lower[j]), num(p.upper[j]));
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Status> {
    let prep = prepare(cfg)?;
    let fit = fit_dataset(&prep.data, cfg)?;
    write_fit_artifacts(cfg, &prep, &fit, None)
}

pub fn cmd_tune(cfg: &RunConfig) -> Result<Status> {
    let prep = prepare(cfg)?;
    let outcome = tune(&prep.data, &cfg.hyperparams(), &cfg.schedule, cfg.budget, &cfg.sampler())?;
    let out = &cfg.output;
    let report = outcome.report.clone();
    write_json(&out.join("tuning_report.json"), &report)?;
    let hi = cfg.schedule.iter().copied().fold(report.final_zeta, f64::max);
    let lo = cfg.schedule.iter().copied().fold(cfg.zeta, f64::min);
    let mut curve = Vec::new();
    report.write_curve_csv(&mut curve, &curve_grid(lo.min(hi / 10.0), hi, 50))?;
    io::write_atomic(&out.join("tuning_curve.csv"), &curve)?;
    for (i, r) in report.rounds.iter().enumerate() {
        println!(
            "round {} zeta {} W {} threshold {} passed {} lp_rhat {}",
            i + 1,
            num(r.zeta),
            num(r.within_variance),
            num(r.threshold),
            r.passed,
            num(r.rhat_lp)
        );
    }
    let fit = Fit { knots: outcome.knots, model: outcome.model, chains: outcome.chains };
    let tuned = RunConfig { zeta: report.final_zeta, ..cfg.clone() };
    let status = write_fit_artifacts(&tuned, &prep, &fit, Some(report.clone()))?;
    if report.failed {
        warn!("tuning budget exhausted without passing the informativeness check");
        return Ok(Status::TuningFailed);
    }
    Ok(status)
}

/// Point prediction and interval for one covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Set when a quantile fell outside the grid's CDF range.
    pub clipped: bool,
}

/// Quantile level used for point predictions: the censoring rate for
/// censored training data, the median otherwise.
pub fn point_level(censoring_rate: f64) -> f64 {
    if censoring_rate > 0.0 {
        censoring_rate
    } else {
        0.5
    }
}

pub fn summarize_ppd(ppd: &PpdResult, level: f64, point: f64) -> Result<RowPrediction> {
    let tail = 0.5 * (1.0 - level);
    let (p, c0) = ppd.quantile_clipped(point)?;
    let (lo, c1) = ppd.quantile_clipped(tail)?;
    let (hi, c2) = ppd.quantile_clipped(1.0 - tail)?;
    Ok(RowPrediction { point: p, lower: lo, upper: hi, clipped: c0 || c1 || c2 })
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Status> {
    let model_dir = cfg.model_dir.clone().unwrap_or_else(|| cfg.output.clone());
    let fitted = FittedModel::load(&model_dir.join("model.json"))?;
    let table = read_draws(&model_dir.join("draws.csv"))?;
    fitted.check_layout(&table.layout, table.n_knots)?;
    let posterior = Posterior::from_points(&fitted.basis, &table.points()?)?;
    let cov_path = cfg.covariates.as_deref().ok_or_else(|| Error::Config("`covariates` is required".into()))?;
    let raw = read_covariates(cov_path, &fitted.covariate_names)?;
    let z = fitted.design(&raw)?;
    let grid = match (cfg.grid_min, cfg.grid_max) {
        (Some(a), Some(b)) => (0..cfg.grid_points).map(|i| a + (b - a) * i as f64 / (cfg.grid_points - 1) as f64).collect(),
        _ => {
            let (lo, hi) = fitted.response_range;
            default_grid(&[lo, hi], fitted.domain, cfg.grid_points)?
        }
    };
    let level = point_level(fitted.censoring_rate);
    let predictor = FittedPredictor { posterior: &posterior, expansion: None, scale: fitted.response_scale };
    let mut curves = Vec::with_capacity(z.len());
    let mut survival: Vec<SurvivalCurve> = Vec::new();
    let mut rows = Vec::with_capacity(z.len());
    for zi in &z {
        let ppd = predictor.ppd(zi, &grid)?;
        let pred = summarize_ppd(&ppd, cfg.level, level)?;
        rows.push(vec![
            (rows.len() + 1).to_string(),
            num(pred.point),
            num(pred.lower),
            num(pred.upper),
            u8::from(pred.clipped).to_string(),
        ]);
        if fitted.domain == Domain::Positive {
            survival.push(predictor.survival_curve(zi, &grid, cfg.hazard_cap)?);
        }
        curves.push(ppd);
    }
    let out = &cfg.output;
    let surv = (fitted.domain == Domain::Positive).then_some(survival.as_slice());
    write_ppd_curves(&out.join("ppd_curves.csv"), &curves, surv)?;
    let header: Vec<String> = ["row", "point", "lower", "upper", "clipped"].map(String::from).to_vec();
    io::write_csv(&out.join("predictions.csv"), &header, rows)?;
    println!("point level {}; interval level {}", num(level), num(cfg.level));
    println!("wrote predictions for {} row(s) to {}", z.len(), out.display());
    Ok(Status::Success)
}

/// Posterior evaluated on raw covariates and responses in original units.
struct FittedPredictor<'a> {
    posterior: &'a Posterior,
    expansion: Option<&'a AdditiveExpansion>,
    scale: f64,
}

impl FittedPredictor<'_> {
    fn design(&self, z: &[f64]) -> Vec<f64> {
        match self.expansion {
            Some(e) => e.transform_row(z),
            None => z.to_vec(),
        }
    }

    fn scaled(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|s| s / self.scale).collect()
    }

    fn survival_curve(&self, z: &[f64], grid: &[f64], cap: f64) -> Result<SurvivalCurve> {
        let mut curve = self.posterior.conditional_survival(&self.design(z), &self.scaled(grid), cap)?;
        curve.grid = grid.to_vec();
        Ok(curve)
    }
}

impl Predictor for FittedPredictor<'_> {
    fn ppd(&self, z: &[f64], grid: &[f64]) -> Result<PpdResult> {
        let mut ppd = self.posterior.ppd(&self.design(z), &self.scaled(grid))?;
        ppd.grid = grid.to_vec();
        ppd.pdf.iter_mut().for_each(|d| *d /= self.scale);
        Ok(ppd)
    }

    fn survival(&self, z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.survival_curve(z, grid, DEFAULT_HAZARD_CAP)?.survival)
    }
}

/// Schema of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub setting: Setting,
    pub seed: u64,
    pub n: usize,
    pub n_test: usize,
    /// `"oracle"` or `"posterior"`.
    pub predictor: String,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergences: Option<usize>,
}

/// Simulates a setting, fits it (or uses the truth) and scores the test rows.
pub fn evaluate_setting(cfg: &RunConfig, oracle: bool) -> Result<EvaluationReport> {
    let sim = generate(&cfg.sim_spec())?;
    let opts = AssessOptions { level: cfg.level, grid_points: cfg.grid_points };
    let (metrics, divergences) = if oracle {
        (assess(&sim.truth, &sim.train, &sim.test, Some(&sim.truth), &opts)?, None)
    } else {
        let (mut train, expansion) = expand_sim(&sim.train, cfg)?;
        train.y.iter_mut().for_each(|v| *v /= cfg.response_scale);
        let fit = fit_dataset(&train.dataset(cfg.tau)?, cfg)?;
        let posterior = fit.posterior()?;
        let pred = FittedPredictor { posterior: &posterior, expansion: expansion.as_ref(), scale: cfg.response_scale };
        let metrics = assess(&pred, &sim.train, &sim.test, Some(&sim.truth), &opts)?;
        (metrics, Some(fit.chains.divergences()))
    };
    Ok(EvaluationReport {
        setting: cfg.setting,
        seed: cfg.seed,
        n: cfg.n,
        n_test: cfg.n_test,
        predictor: if oracle { "oracle" } else { "posterior" }.into(),
        metrics,
        divergences,
    })
}

fn expand_sim(train: &SimData, cfg: &RunConfig) -> Result<(SimData, Option<AdditiveExpansion>)> {
    match cfg.expansion {
        None => Ok((train.clone(), None)),
        Some(family) => {
            let e = AdditiveExpansion::fit(&train.z, family, cfg.expansion_size)?;
            let expanded = SimData { z: e.transform(&train.z)?, ..train.clone() };
            Ok((expanded, Some(e)))
        }
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, oracle: bool) -> Result<Status> {
    let report = evaluate_setting(cfg, oracle)?;
    write_json(&cfg.output.join("metrics.json"), &report)?;
    let m = &report.metrics;
    let show = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            println!("{name:<12} {}", num(v));
        }
    };
    show("rimse", m.rimse);
    show("mae", m.mae);
    show("baseline_mae", m.baseline_mae);
    show("coverage", m.coverage);
    show("c_index", m.c_index);
    show("ibs", m.ibs.as_ref().map(|r| r.value));
    println!("wrote {}", cfg.output.join("metrics.json").display());
    let pathological = report.divergences.is_some_and(|d| {
        d as f64 > MAX_DIVERGENCE_FRACTION * (cfg.chains * cfg.draws) as f64
    });
    Ok(if pathological { Status::Pathology } else { Status::Success })
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<Status> {
    let dir = cfg.model_dir.clone().unwrap_or_else(|| cfg.output.clone());
    let table = read_draws(&dir.join("draws.csv"))?;
    let report = diagnostics_from_table(&table)?;
    write_json(&cfg.output.join("diagnostics.json"), &report)?;
    print_diagnostics(&report);
    Ok(Status::Success)
}
