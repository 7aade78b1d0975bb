//! Multi-chain No-U-Turn sampler with multinomial trajectory sampling,
//! dual-averaging step size and windowed diagonal metric adaptation.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::log_sum_exp;

/// Energy error beyond which a trajectory is declared divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;
const INIT_ATTEMPTS: usize = 100;

/// Differentiable log density over `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density up to a constant; `-inf` outside the support.
    fn logp(&self, x: &[f64]) -> f64;

    /// Log density with its gradient written into `grad`.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Scalars recorded alongside every retained draw.
    fn derived(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Random starting point; uniform on `(-2, 2)` per coordinate by default.
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { chains: 4, warmup: 500, draws: 500, target_accept: 0.8, max_tree_depth: 10, seed: 1 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::invalid("need at least one chain"));
        }
        if self.warmup < 100 {
            return Err(Error::invalid(format!("warmup must be at least 100, got {}", self.warmup)));
        }
        if self.draws < 100 {
            return Err(Error::invalid(format!("draws must be at least 100, got {}", self.draws)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!("target_accept must be in (0, 1), got {}", self.target_accept)));
        }
        if !(1..=30).contains(&self.max_tree_depth) {
            return Err(Error::invalid(format!("max_tree_depth must be in 1..=30, got {}", self.max_tree_depth)));
        }
        Ok(())
    }
}

/// Per-chain adaptation results and sampling statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Mean acceptance statistic over retained draws.
    pub mean_accept: f64,
    /// Divergent transitions among retained draws.
    pub divergences: usize,
    pub mean_tree_depth: f64,
    pub max_depth_hits: usize,
    pub leapfrog_steps: usize,
}

/// Retained draws of `chains x draws` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    /// `[chain][iteration][coordinate]`, unconstrained.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// `[chain][iteration]` log density.
    pub lp: Vec<Vec<f64>>,
    /// `[chain][iteration][k]` derived scalars.
    pub derived: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.draws.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// `[chain][iteration]` values of coordinate `idx`.
    pub fn coordinate(&self, idx: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[idx]).collect()).collect()
    }

    /// `[chain][iteration]` values of derived scalar `idx`.
    pub fn derived_scalar(&self, idx: usize) -> Vec<Vec<f64>> {
        self.derived.iter().map(|c| c.iter().map(|d| d[idx]).collect()).collect()
    }

    /// All draws flattened in chain-major order.
    pub fn flat_draws(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.draws.iter().flatten()
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }

    pub fn divergence_fraction(&self) -> f64 {
        let total = self.n_chains() * self.n_draws();
        if total == 0 {
            0.0
        } else {
            self.divergences() as f64 / total as f64
        }
    }
}

/// Runs `cfg.chains` independent chains. Chain `m` uses its own stream of a
/// ChaCha generator seeded with `cfg.seed`, so results do not depend on
/// thread scheduling.
pub fn run_chains<T: LogDensity>(target: &T, cfg: &SamplerConfig, inits: Option<&[Vec<f64>]>) -> Result<ChainSet> {
    cfg.validate()?;
    if let Some(inits) = inits {
        if inits.len() != cfg.chains {
            return Err(Error::invalid(format!("{} initial points for {} chains", inits.len(), cfg.chains)));
        }
        if let Some(bad) = inits.iter().find(|x| x.len() != target.dim()) {
            return Err(Error::invalid(format!("initial point has {} coordinates, expected {}", bad.len(), target.dim())));
        }
    }
    let results: Vec<Result<ChainOutput>> = (0..cfg.chains)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(m as u64);
            run_chain(target, cfg, inits.map(|x| x[m].as_slice()), &mut rng)
        })
        .collect();

    let mut set = ChainSet { draws: vec![], lp: vec![], derived: vec![], stats: vec![], warnings: vec![] };
    for (m, r) in results.into_iter().enumerate() {
        let out = r.map_err(|e| match e {
            Error::Initialization(msg) => Error::Initialization(format!("chain {}: {msg}", m + 1)),
            other => other,
        })?;
        set.draws.push(out.draws);
        set.lp.push(out.lp);
        set.derived.push(out.derived);
        set.stats.push(out.stats);
    }
    let frac = set.divergence_fraction();
    if frac > 0.1 {
        let msg = format!("{:.1}% of transitions diverged", 100.0 * frac);
        warn!("{msg}");
        set.warnings.push(msg);
    }
    let hits: usize = set.stats.iter().map(|s| s.max_depth_hits).sum();
    if hits > 0 {
        set.warnings.push(format!("{hits} transitions hit the maximum tree depth"));
    }
    Ok(set)
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    lp: Vec<f64>,
    derived: Vec<Vec<f64>>,
    stats: ChainStats,
}

fn run_chain<T: LogDensity>(target: &T, cfg: &SamplerConfig, init: Option<&[f64]>, rng: &mut ChaCha8Rng) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    let q = match init {
        Some(x) => {
            let lp = target.logp_grad(x, &mut grad);
            if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Initialization("log density or gradient not finite at the supplied point".into()));
            }
            x.to_vec()
        }
        None => {
            let mut found = None;
            for _ in 0..INIT_ATTEMPTS {
                let x = target.initial_point(rng);
                let lp = target.logp_grad(&x, &mut grad);
                if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
                    found = Some(x);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Initialization(format!("no finite starting point in {INIT_ATTEMPTS} attempts"))
            })?
        }
    };

    let mut nuts = Nuts::new(target, q, cfg.max_tree_depth);
    nuts.init_step_size(rng);
    let mut step = DualAveraging::new(cfg.target_accept, nuts.eps);
    let mut windows = MetricWindows::new(cfg.warmup, dim);

    for _ in 0..cfg.warmup {
        let t = nuts.transition(rng);
        nuts.eps = step.learn(t.accept_stat);
        if windows.learn(&nuts.state.q, &mut nuts.inv_metric) {
            nuts.init_step_size(rng);
            step.restart(nuts.eps);
        }
    }
    nuts.eps = step.final_step_size();

    let mut out = ChainOutput {
        draws: Vec::with_capacity(cfg.draws),
        lp: Vec::with_capacity(cfg.draws),
        derived: Vec::with_capacity(cfg.draws),
        stats: ChainStats {
            step_size: nuts.eps,
            inv_metric: nuts.inv_metric.clone(),
            mean_accept: 0.0,
            divergences: 0,
            mean_tree_depth: 0.0,
            max_depth_hits: 0,
            leapfrog_steps: 0,
        },
    };
    for _ in 0..cfg.draws {
        let t = nuts.transition(rng);
        let s = &mut out.stats;
        s.mean_accept += t.accept_stat;
        s.divergences += t.divergent as usize;
        s.mean_tree_depth += t.depth as f64;
        s.max_depth_hits += (t.depth >= cfg.max_tree_depth) as usize;
        s.leapfrog_steps += t.n_leapfrog;
        out.draws.push(nuts.state.q.clone());
        out.lp.push(nuts.state.lp);
        out.derived.push(target.derived(&nuts.state.q));
    }
    out.stats.mean_accept /= cfg.draws as f64;
    out.stats.mean_tree_depth /= cfg.draws as f64;
    Ok(out)
}

#[derive(Debug, Clone)]
struct PhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

struct Transition {
    accept_stat: f64,
    depth: usize,
    n_leapfrog: usize,
    divergent: bool,
}

/// Mutable tallies threaded through the tree recursion.
struct TreeTally {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

struct Nuts<'a, T: LogDensity> {
    target: &'a T,
    state: PhaseState,
    inv_metric: Vec<f64>,
    eps: f64,
    max_depth: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a, T: LogDensity> Nuts<'a, T> {
    fn new(target: &'a T, q: Vec<f64>, max_depth: usize) -> Self {
        let dim = q.len();
        let mut grad = vec![0.0; dim];
        let lp = target.logp_grad(&q, &mut grad);
        Self {
            target,
            state: PhaseState { q, p: vec![0.0; dim], grad, lp },
            inv_metric: vec![1.0; dim],
            eps: 1.0,
            max_depth,
        }
    }

    fn sample_momentum(&self, z: &mut PhaseState, rng: &mut ChaCha8Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let e: f64 = rng.sample(StandardNormal);
            *p = e / m.sqrt();
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &PhaseState) -> f64 {
        let h = -z.lp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn leapfrog(&self, z: &mut PhaseState, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.target.logp_grad(&z.q, &mut z.grad);
        if !z.lp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
            z.lp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    /// Doubles the step size until the one-step acceptance crosses 0.8.
    fn init_step_size(&mut self, rng: &mut ChaCha8Rng) {
        let saved = self.state.clone();
        let mut z = saved.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);
        self.leapfrog(&mut z, self.eps);
        let delta = h0 - self.hamiltonian(&z);
        let direction = if delta > 0.8f64.ln() { 1 } else { -1 };
        loop {
            let mut z = saved.clone();
            self.sample_momentum(&mut z, rng);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(&mut z, self.eps);
            let delta = h0 - self.hamiltonian(&z);
            if (direction == 1 && !(delta > 0.8f64.ln())) || (direction == -1 && !(delta < 0.8f64.ln())) {
                break;
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 || self.eps < 1e-12 {
                self.eps = self.eps.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    fn transition(&mut self, rng: &mut ChaCha8Rng) -> Transition {
        let mut z = self.state.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = self.p_sharp(&z.p);
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp_fwd_fwd.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp_fwd_fwd.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp_fwd_fwd.clone();

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut depth = 0;
        let mut tally = TreeTally { n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
        let dim = z.q.len();

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;
            let valid;
            if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                valid = self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut log_sum_weight_subtree,
                    &mut tally,
                    rng,
                );
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                valid = self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut log_sum_weight_subtree,
                    &mut tally,
                    rng,
                );
            }
            if !valid {
                break;
            }
            depth += 1;
            if log_sum_weight_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(&[log_sum_weight, log_sum_weight_subtree]);

            for ((r, b), f) in rho.iter_mut().zip(&rho_bck).zip(&rho_fwd) {
                *r = b + f;
            }
            let mut persist = uturn_free(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let ext: Vec<f64> = rho_bck.iter().zip(&p_fwd_bck).map(|(a, b)| a + b).collect();
            persist &= uturn_free(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            let ext: Vec<f64> = rho_fwd.iter().zip(&p_bck_fwd).map(|(a, b)| a + b).collect();
            persist &= uturn_free(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }

        self.state = z_sample;
        let accept_stat = if tally.n_leapfrog > 0 { tally.sum_metro_prob / tally.n_leapfrog as f64 } else { 0.0 };
        Transition { accept_stat, depth, n_leapfrog: tally.n_leapfrog, divergent: tally.divergent }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &self,
        depth: usize,
        z: &mut PhaseState,
        z_propose: &mut PhaseState,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        tally: &mut TreeTally,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.eps);
            tally.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_ENERGY_ERROR {
                tally.divergent = true;
            }
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, h0 - h]);
            tally.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !tally.divergent;
        }
        let dim = z.q.len();

        // initial subtree
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut log_sum_weight_init,
            tally,
            rng,
        ) {
            return false;
        }

        // final subtree
        let mut z_propose_final = z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut log_sum_weight_final,
            tally,
            rng,
        ) {
            return false;
        }

        // multinomial choice between the two halves
        let log_sum_weight_subtree = log_sum_exp(&[log_sum_weight_init, log_sum_weight_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, log_sum_weight_subtree]);
        if log_sum_weight_final > log_sum_weight_subtree {
            z_propose.clone_from(&z_propose_final);
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if rng.random::<f64>() < accept {
                z_propose.clone_from(&z_propose_final);
            }
        }

        let rho_subtree: Vec<f64> = rho_init.iter().zip(&rho_final).map(|(a, b)| a + b).collect();
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = uturn_free(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<f64> = rho_init.iter().zip(&p_final_beg).map(|(a, b)| a + b).collect();
        persist &= uturn_free(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<f64> = rho_final.iter().zip(&p_init_end).map(|(a, b)| a + b).collect();
        persist &= uturn_free(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }
}

/// Generalized no-U-turn condition on the summed momentum `rho`.
fn uturn_free(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Nesterov dual averaging on `ln eps`.
struct DualAveraging {
    delta: f64,
    gamma: f64,
    kappa: f64,
    t0: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    fn new(delta: f64, eps: f64) -> Self {
        let mut d = Self { delta, gamma: 0.05, kappa: 0.75, t0: 10.0, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        d.restart(eps);
        d
    }

    fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Warmup schedule: an initial fast buffer, doubling slow windows that
/// estimate the inverse metric, and a terminal fast buffer.
struct MetricWindows {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricWindows {
    fn new(warmup: usize, dim: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        if init_buffer + term_buffer + base > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base = warmup - (init_buffer + term_buffer);
        }
        Self {
            warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window: init_buffer + base - 1,
            counter: 0,
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn window_ends(&self) -> bool {
        self.counter == self.next_window && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        if self.next_window == self.warmup - self.term_buffer - 1 {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != self.warmup - self.term_buffer - 1 {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary >= self.warmup - self.term_buffer {
                self.next_window = self.warmup - self.term_buffer - 1;
            }
        }
    }

    /// Returns true when a window closed and `inv_metric` was updated.
    fn learn(&mut self, q: &[f64], inv_metric: &mut [f64]) -> bool {
        if self.in_window() {
            self.n += 1;
            for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
                let d = x - *m;
                *m += d / self.n as f64;
                *s += d * (x - *m);
            }
        }
        if self.window_ends() {
            self.compute_next_window();
            let n = self.n as f64;
            if self.n > 1 {
                for (v, s) in inv_metric.iter_mut().zip(&self.m2) {
                    let var = s / (n - 1.0);
                    *v = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
            }
            self.n = 0;
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            self.m2.iter_mut().for_each(|s| *s = 0.0);
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}
