//! Mixing diagnostics for one scalar quantity tracked over several chains.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// `M x N` draws of one scalar, `M >= 2`, `N >= 2`, all finite. R-hat
/// additionally needs `N >= 4` and ESS `N >= 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarChains {
    values: Vec<Vec<f64>>,
}

impl ScalarChains {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 chains, got {}", values.len())));
        }
        let n = values[0].len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 draws per chain, got {n}")));
        }
        if values.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("chains have different lengths"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite draw"));
        }
        Ok(Self { values })
    }

    pub fn n_chains(&self) -> usize {
        self.values.len()
    }

    pub fn n_draws(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn total(&self) -> usize {
        self.n_chains() * self.n_draws()
    }

    /// Halves of every chain; the middle draw of odd-length chains is dropped.
    fn split(&self) -> Vec<Vec<f64>> {
        let half = self.n_draws() / 2;
        let n = self.n_draws();
        self.values
            .iter()
            .flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()])
            .collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean over chains of the per-chain sample variance (divisor `N - 1`).
pub fn within_chain_variance(sc: &ScalarChains) -> f64 {
    sc.values.iter().map(|c| variance(c)).sum::<f64>() / sc.n_chains() as f64
}

/// Jointly ranks every value (ties get their average rank) and maps rank
/// `r` of `S` to `Phi^-1((r - 3/8) / (S + 1/4))`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<(usize, f64)> = chains.iter().flatten().copied().enumerate().collect();
    let s = flat.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| flat[a].1.total_cmp(&flat[b].1));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && flat[order[j + 1]].1 == flat[order[i]].1 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        let mut z = Vec::with_capacity(c.len());
        for _ in c {
            z.push(normal.inverse_cdf((ranks[k] - 0.375) / (s as f64 + 0.25)));
            k += 1;
        }
        out.push(z);
    }
    out
}

/// Classic potential scale reduction on equal-length chains.
fn rhat_classic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let b = n * variance(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Rank-normalized split R-hat. All-equal input gives 1; chains that are
/// individually constant but differ give infinity.
pub fn split_rank_normalized_rhat(sc: &ScalarChains) -> Result<f64> {
    if sc.n_draws() < 4 {
        return Err(Error::invalid("split R-hat needs at least 4 draws per chain"));
    }
    Ok(rhat_classic(&rank_normalize(&sc.split())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssFlag {
    /// No within-chain variation; ESS is a defined placeholder.
    Degenerate,
    /// ESS exceeds 1.5 times the number of draws.
    SuperEfficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    pub flag: Option<EssFlag>,
}

/// Autocovariances with divisor `n` at lags `0..n`.
fn autocovariance(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| x - m).collect();
    (0..n)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain ESS with Geyer's initial monotone sequence truncation.
fn ess_from_chains(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = acov.iter().map(|a| a[0] * n as f64 / (n as f64 - 1.0)).collect();
    let mean_var = mean(&chain_vars);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += variance(&chain_means);
    }
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;

    let mut rho = vec![0.0; n + 1];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 5 < n && !(rho_even + rho_odd).is_nan() && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    // enforce monotone pair sums
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho[t - 1] + rho[t];
        if rho[t + 1] + rho[t + 2] > prev {
            rho[t + 1] = prev / 2.0;
            rho[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t + 1]).max(1.0 / total.log10());
    total / tau
}

/// Bulk effective sample size on rank-normalized split chains.
///
/// All-equal input reports the total draw count; chains that are each
/// constant report the number of chains. Both carry the degenerate flag.
pub fn bulk_ess(sc: &ScalarChains) -> Result<Ess> {
    if sc.n_draws() < 8 {
        return Err(Error::invalid("bulk ESS needs at least 8 draws per chain"));
    }
    let total = sc.total() as f64;
    let first = sc.values[0][0];
    if sc.values.iter().flatten().all(|&v| v == first) {
        return Ok(Ess { value: total, flag: Some(EssFlag::Degenerate) });
    }
    let split = sc.split();
    if split.iter().any(|c| c.iter().all(|&v| v == c[0])) {
        return Ok(Ess { value: sc.n_chains() as f64, flag: Some(EssFlag::Degenerate) });
    }
    let value = ess_from_chains(&rank_normalize(&split));
    let flag = (value > 1.5 * total).then_some(EssFlag::SuperEfficient);
    Ok(Ess { value, flag })
}

/// Diagnostics for one named scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<EssFlag>,
}

pub fn summarize(name: impl Into<String>, values: Vec<Vec<f64>>) -> Result<Summary> {
    let sc = ScalarChains::new(values)?;
    let ess = bulk_ess(&sc)?;
    Ok(Summary {
        name: name.into(),
        rhat: split_rank_normalized_rhat(&sc)?,
        ess: ess.value,
        w: within_chain_variance(&sc),
        flag: ess.flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn iid(m: usize, n: usize, seed: u64) -> ScalarChains {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarChains::new((0..m).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()).unwrap()
    }

    fn ar1(m: usize, n: usize, phi: f64, seed: u64) -> ScalarChains {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (1.0 - phi * phi).sqrt();
        let chains = (0..m)
            .map(|_| {
                let mut x: f64 = rng.sample(StandardNormal);
                (0..n)
                    .map(|_| {
                        let e: f64 = rng.sample(StandardNormal);
                        x = phi * x + sd * e;
                        x
                    })
                    .collect()
            })
            .collect();
        ScalarChains::new(chains).unwrap()
    }

    #[test]
    fn within_chain_variance_by_hand() {
        let sc = ScalarChains::new(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(within_chain_variance(&sc), 1.0);
        assert!(split_rank_normalized_rhat(&sc).is_err());
        let flat = ScalarChains::new(vec![vec![2.5; 6], vec![2.5; 6]]).unwrap();
        assert_eq!(within_chain_variance(&flat), 0.0);
    }

    #[test]
    fn within_chain_variance_tracks_sigma() {
        let sc = iid(4, 5000, 1);
        let scaled = ScalarChains::new(sc.values().iter().map(|c| c.iter().map(|x| 3.0 * x).collect()).collect()).unwrap();
        assert!((within_chain_variance(&scaled) / 9.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn iid_rhat_and_ess() {
        for seed in 0..5 {
            let sc = iid(4, 1000, seed);
            let r = split_rank_normalized_rhat(&sc).unwrap();
            assert!((0.999..=1.01).contains(&r), "rhat {r}");
            let ess = bulk_ess(&sc).unwrap().value;
            assert!((ess - 4000.0).abs() <= 800.0, "ess {ess}");
        }
    }

    #[test]
    fn ar1_ess_matches_analytic() {
        let phi = 0.9;
        let sc = ar1(4, 1000, phi, 2);
        let expect = 4000.0 * (1.0 - phi) / (1.0 + phi);
        let ess = bulk_ess(&sc).unwrap().value;
        assert!((ess / expect - 1.0).abs() < 0.3, "ess {ess} vs {expect}");
    }

    #[test]
    fn separated_chains_have_large_rhat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chains: Vec<Vec<f64>> = [0.0, 10.0]
            .iter()
            .map(|&level| (0..200).map(|_| level + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        assert!(split_rank_normalized_rhat(&ScalarChains::new(chains).unwrap()).unwrap() > 1.2);
        let constant = ScalarChains::new(vec![vec![0.0; 50], vec![10.0; 50]]).unwrap();
        assert!(split_rank_normalized_rhat(&constant).unwrap() > 1.2);
        let ess = bulk_ess(&constant).unwrap();
        assert_eq!(ess, Ess { value: 2.0, flag: Some(EssFlag::Degenerate) });
    }

    #[test]
    fn constant_input_is_defined() {
        let sc = ScalarChains::new(vec![vec![1.5; 20]; 3]).unwrap();
        assert_eq!(split_rank_normalized_rhat(&sc).unwrap(), 1.0);
        assert_eq!(bulk_ess(&sc).unwrap(), Ess { value: 60.0, flag: Some(EssFlag::Degenerate) });
    }

    #[test]
    fn identical_copies_are_deterministic() {
        let chain = iid(2, 400, 9).values()[0].clone();
        let sc = ScalarChains::new(vec![chain.clone(), chain]).unwrap();
        let a = split_rank_normalized_rhat(&sc).unwrap();
        assert_eq!(a, split_rank_normalized_rhat(&sc).unwrap());
        assert!(a.is_finite() && a < 1.05);
    }

    #[test]
    fn antithetic_chains_are_flagged() {
        // strongly negatively correlated draws give ESS above the draw count
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..500).map(|i| if (i + c) % 2 == 0 { 1.0 + i as f64 * 1e-3 } else { -1.0 - i as f64 * 1e-3 }).collect())
            .collect();
        let ess = bulk_ess(&ScalarChains::new(chains).unwrap()).unwrap();
        assert!(ess.value > 3000.0);
        assert_eq!(ess.flag, Some(EssFlag::SuperEfficient));
    }

    #[test]
    fn affine_invariance() {
        let sc = ar1(4, 300, 0.5, 4);
        let r = split_rank_normalized_rhat(&sc).unwrap();
        let e = bulk_ess(&sc).unwrap().value;
        let w = within_chain_variance(&sc);
        for (a, b) in [(2.5, -1.0), (-0.3, 7.0)] {
            let t = ScalarChains::new(sc.values().iter().map(|c| c.iter().map(|x| a * x + b).collect()).collect()).unwrap();
            assert!((split_rank_normalized_rhat(&t).unwrap() - r).abs() < 1e-12);
            assert!((bulk_ess(&t).unwrap().value - e).abs() < 1e-8 * e);
            assert!((within_chain_variance(&t) - a * a * w).abs() < 1e-10 * w.max(1.0));
        }
    }

    #[test]
    fn validation() {
        assert!(ScalarChains::new(vec![vec![1.0; 10]]).is_err());
        assert!(ScalarChains::new(vec![vec![1.0; 1]; 2]).is_err());
        assert!(ScalarChains::new(vec![vec![1.0; 10], vec![1.0; 9]]).is_err());
        assert!(ScalarChains::new(vec![vec![f64::NAN; 10]; 2]).is_err());
        assert!(bulk_ess(&ScalarChains::new(vec![vec![1.0, 2.0, 3.0, 4.0]; 2]).unwrap()).is_err());
    }
}
