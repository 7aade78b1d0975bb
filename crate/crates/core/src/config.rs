//! Flat run configuration read from TOML. Every key has a default, so an
//! empty file selects the recommended settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::ExpansionFamily;
use crate::error::{Error, Result};
use crate::eval::{Setting, SimSpec};
use crate::informativeness::{DEFAULT_ROUND_BUDGET, DEFAULT_ZETA_SCHEDULE};
use crate::model::{Domain, Hyperparams};
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // prior rates and structure
    pub eta: f64,
    pub zeta: f64,
    pub rho: f64,
    pub c: f64,
    pub truncation: usize,
    pub n_initial: usize,
    pub order: usize,
    pub tau: f64,
    pub beta_prior_sd: Option<f64>,

    // sampler
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,

    // tuning
    pub schedule: Vec<f64>,
    pub budget: usize,

    // prediction
    pub grid_points: usize,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub level: f64,
    pub hazard_cap: f64,

    // data
    pub domain: Domain,
    pub input: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub output: PathBuf,
    pub model_dir: Option<PathBuf>,
    pub expansion: Option<ExpansionFamily>,
    pub expansion_size: usize,
    /// Responses are divided by this before fitting; predictions are mapped back.
    pub response_scale: f64,

    // simulation
    pub setting: Setting,
    pub n: usize,
    pub n_test: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let sc = SamplerConfig::default();
        Self {
            eta: hp.eta,
            zeta: hp.zeta,
            rho: hp.rho,
            c: hp.c,
            truncation: hp.truncation,
            n_initial: hp.n_initial,
            order: hp.order,
            tau: hp.tau,
            beta_prior_sd: hp.beta_prior_sd,
            chains: sc.chains,
            warmup: sc.warmup,
            draws: sc.draws,
            target_accept: sc.target_accept,
            max_tree_depth: sc.max_tree_depth,
            seed: sc.seed,
            schedule: DEFAULT_ZETA_SCHEDULE.to_vec(),
            budget: DEFAULT_ROUND_BUDGET,
            grid_points: crate::inference::DEFAULT_GRID_POINTS,
            grid_min: None,
            grid_max: None,
            level: 0.95,
            hazard_cap: crate::inference::DEFAULT_HAZARD_CAP,
            domain: Domain::Real,
            input: None,
            covariates: None,
            output: PathBuf::from("out"),
            model_dir: None,
            expansion: None,
            expansion_size: 5,
            response_scale: 1.0,
            setting: Setting::A1,
            n: 200,
            n_test: 100,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            eta: self.eta,
            zeta: self.zeta,
            rho: self.rho,
            c: self.c,
            truncation: self.truncation,
            n_initial: self.n_initial,
            order: self.order,
            tau: self.tau,
            beta_prior_sd: self.beta_prior_sd,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup: self.warmup,
            draws: self.draws,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
            seed: self.seed,
        }
    }

    pub fn sim_spec(&self) -> SimSpec {
        SimSpec::new(self.setting, self.n, self.n_test, self.seed)
    }

    /// Checks every module's preconditions up front.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.hyperparams().validate().map_err(wrap)?;
        self.sampler().validate().map_err(wrap)?;
        self.sim_spec().validate().map_err(wrap)?;
        if self.schedule.is_empty() || self.schedule.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::Config("schedule must be a nonempty list of positive rates".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if let (Some(a), Some(b)) = (self.grid_min, self.grid_max) {
            if !(a < b) {
                return Err(Error::Config(format!("grid_min {a} must be below grid_max {b}")));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} outside (0, 1)", self.level)));
        }
        if !(self.hazard_cap > 0.0) {
            return Err(Error::Config("hazard_cap must be positive".into()));
        }
        if !(self.response_scale > 0.0 && self.response_scale.is_finite()) {
            return Err(Error::Config("response_scale must be positive and finite".into()));
        }
        if self.expansion.is_some() && self.expansion_size < 2 {
            return Err(Error::Config("expansion_size must be at least 2".into()));
        }
        Ok(())
    }
}
