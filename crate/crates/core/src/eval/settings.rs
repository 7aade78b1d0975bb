use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Dataset, Domain};

const COVARIATE_CORR: f64 = 0.75;
const BOX_COX_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    A1,
    A2,
    A3,
    A4,
    B1,
    B2,
    C1,
    C2,
}

impl Setting {
    pub const ALL: [Setting; 8] =
        [Setting::A1, Setting::A2, Setting::A3, Setting::A4, Setting::B1, Setting::B2, Setting::C1, Setting::C2];

    pub fn name(self) -> &'static str {
        match self {
            Setting::A1 => "a1",
            Setting::A2 => "a2",
            Setting::A3 => "a3",
            Setting::A4 => "a4",
            Setting::B1 => "b1",
            Setting::B2 => "b2",
            Setting::C1 => "c1",
            Setting::C2 => "c2",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Setting::B1 | Setting::B2 => Domain::Positive,
            _ => Domain::Real,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, Setting::B1 | Setting::B2)
    }

    pub fn n_covariates(self) -> usize {
        match self {
            Setting::C1 | Setting::C2 => 2,
            _ => 3,
        }
    }

    pub fn error_law(self) -> ErrorLaw {
        match self {
            Setting::A1 | Setting::C1 => ErrorLaw::Normal,
            Setting::A2 | Setting::B2 | Setting::C2 => ErrorLaw::NormalMixture,
            Setting::A3 => ErrorLaw::Gumbel,
            Setting::A4 => ErrorLaw::Logistic,
            Setting::B1 => ErrorLaw::MinExtremeValue,
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '.').collect::<String>().to_ascii_lowercase();
        Setting::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown simulation setting {s:?}")))
    }
}

/// Distribution of the additive model error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    /// `0.5 N(-0.5, 0.5^2) + 0.5 N(1.5, 1)`.
    NormalMixture,
    /// `F(s) = exp(-exp(-s))`.
    Gumbel,
    Logistic,
    /// `F(s) = 1 - exp(-exp(s))`, the law of `ln E` for `E ~ Exp(1)`.
    MinExtremeValue,
}

impl ErrorLaw {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal => rng.sample(StandardNormal),
            ErrorLaw::NormalMixture => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<f64>() < 0.5 {
                    -0.5 + 0.5 * z
                } else {
                    1.5 + z
                }
            }
            ErrorLaw::Gumbel => {
                let e: f64 = rng.sample(Exp1);
                -e.ln()
            }
            ErrorLaw::Logistic => {
                let u: f64 = rng.sample(Uniform::new(0.0, 1.0).expect("valid range"));
                (u / (1.0 - u)).ln()
            }
            ErrorLaw::MinExtremeValue => {
                let e: f64 = rng.sample(Exp1);
                e.ln()
            }
        }
    }

    pub fn cdf(self, s: f64) -> f64 {
        let std = Normal::standard();
        match self {
            ErrorLaw::Normal => std.cdf(s),
            ErrorLaw::NormalMixture => 0.5 * std.cdf((s + 0.5) / 0.5) + 0.5 * std.cdf(s - 1.5),
            ErrorLaw::Gumbel => (-(-s).exp()).exp(),
            ErrorLaw::Logistic => 1.0 / (1.0 + (-s).exp()),
            ErrorLaw::MinExtremeValue => -(-(s.exp())).exp_m1(),
        }
    }

    pub fn pdf(self, s: f64) -> f64 {
        let std = Normal::standard();
        match self {
            ErrorLaw::Normal => std.pdf(s),
            ErrorLaw::NormalMixture => 0.5 * std.pdf((s + 0.5) / 0.5) / 0.5 + 0.5 * std.pdf(s - 1.5),
            ErrorLaw::Gumbel => (-s - (-s).exp()).exp(),
            ErrorLaw::Logistic => {
                let e = (-s.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ErrorLaw::MinExtremeValue => (s - s.exp()).exp(),
        }
    }
}

/// Signed Box-Cox map `(sign(y)|y|^lambda - 1) / lambda`.
pub fn box_cox(y: f64, lambda: f64) -> f64 {
    (y.signum() * y.abs().powf(lambda) - 1.0) / lambda
}

/// Derivative of [`box_cox`]: `|y|^(lambda - 1)`.
pub fn box_cox_derivative(y: f64, lambda: f64) -> f64 {
    y.abs().powf(lambda - 1.0)
}

/// Inverse of [`box_cox`]: `sign(lambda x + 1) |lambda x + 1|^(1 / lambda)`.
pub fn inverse_box_cox(x: f64, lambda: f64) -> f64 {
    let t = lambda * x + 1.0;
    t.signum() * t.abs().powf(1.0 / lambda)
}

/// Setting (b) transformation on `(0, inf)`:
/// `ln[(0.8x + sqrt x + 0.825)(0.5 Phi_{1,0.3}(x) + 0.5 Phi_{3,0.3}(x) + C0)]`
/// with `C0` chosen so the second factor vanishes at zero.
#[derive(Debug, Clone, Copy)]
struct SurvivalLink;

impl SurvivalLink {
    const SD: f64 = 0.3;

    /// Second factor written as increments from zero so it is exactly 0 there.
    fn mixture_factor(x: f64) -> f64 {
        let std = Normal::standard();
        let inc = |mu: f64| {
            let (a, b) = ((x - mu) / Self::SD, -mu / Self::SD);
            // upper-tail form keeps precision when both arguments are negative
            std.sf(-a) - std.sf(-b)
        };
        0.5 * inc(1.0) + 0.5 * inc(3.0)
    }

    fn h(x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ((0.8 * x + x.sqrt() + 0.825) * Self::mixture_factor(x)).ln()
    }

    fn h_prime(x: f64) -> f64 {
        let poly = 0.8 * x + x.sqrt() + 0.825;
        let dpoly = 0.8 + 0.5 / x.sqrt();
        let n1 = Normal::new(1.0, Self::SD).expect("valid normal");
        let n3 = Normal::new(3.0, Self::SD).expect("valid normal");
        let dmix = 0.5 * n1.pdf(x) + 0.5 * n3.pdf(x);
        dpoly / poly + dmix / Self::mixture_factor(x)
    }

    /// Solves `h(x) = t` by bisection on `ln x`.
    fn inverse(t: f64) -> f64 {
        let (mut lo, mut hi) = (-60.0f64, 20.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if Self::h(mid.exp()) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

fn f1(x: f64) -> f64 {
    -x + std::f64::consts::PI * (std::f64::consts::PI * x).sin()
}

fn f2(x: f64) -> f64 {
    let phi = |v: f64| (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * x + 15.0 * phi(2.0 * (x - 0.2)) - phi(x + 0.4)
}

/// True conditional law of the response for a simulation setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub setting: Setting,
}

impl Truth {
    pub fn new(setting: Setting) -> Self {
        Self { setting }
    }

    /// True regression coefficients (settings a and b).
    pub fn beta(&self) -> Option<Vec<f64>> {
        match self.setting {
            Setting::C1 | Setting::C2 => None,
            _ => Some(vec![3f64.sqrt() / 3.0; 3]),
        }
    }

    /// Location `beta' z` or `f1(z1) + f2(z2)`.
    pub fn location(&self, z: &[f64]) -> f64 {
        match self.setting {
            Setting::C1 | Setting::C2 => f1(z[0]) + f2(z[1]),
            _ => z.iter().map(|v| v * 3f64.sqrt() / 3.0).sum(),
        }
    }

    /// Transformation `h` and its derivative at a response value.
    fn link(&self, s: f64) -> (f64, f64) {
        match self.setting.domain() {
            Domain::Real => (box_cox(s, BOX_COX_LAMBDA), box_cox_derivative(s, BOX_COX_LAMBDA)),
            Domain::Positive => (SurvivalLink::h(s), SurvivalLink::h_prime(s)),
        }
    }

    /// Response for a given linear signal: `h^-1(signal)`.
    pub fn response(&self, signal: f64) -> f64 {
        match self.setting.domain() {
            Domain::Real => inverse_box_cox(signal, BOX_COX_LAMBDA),
            Domain::Positive => SurvivalLink::inverse(signal),
        }
    }

    pub fn cdf(&self, s: f64, z: &[f64]) -> f64 {
        if self.setting.domain() == Domain::Positive && s <= 0.0 {
            return 0.0;
        }
        self.setting.error_law().cdf(self.link(s).0 - self.location(z))
    }

    pub fn pdf(&self, s: f64, z: &[f64]) -> f64 {
        if self.setting.domain() == Domain::Positive && s <= 0.0 {
            return 0.0;
        }
        let (h, dh) = self.link(s);
        self.setting.error_law().pdf(h - self.location(z)) * dh
    }

    pub fn survival(&self, s: f64, z: &[f64]) -> f64 {
        1.0 - self.cdf(s, z)
    }

    /// Conditional quantile by inverting the monotone signal map.
    pub fn quantile(&self, q: f64, z: &[f64]) -> f64 {
        let law = self.setting.error_law();
        let (mut lo, mut hi) = (-60.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if law.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.response(0.5 * (lo + hi) + self.location(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSpec {
    pub setting: Setting,
    pub n: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(setting: Setting, n: usize, n_test: usize, seed: u64) -> Self {
        Self { setting, n, n_test, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid(format!("training size must be at least 10, got {}", self.n)));
        }
        if self.n_test < 1 {
            return Err(Error::invalid("test size must be at least 1"));
        }
        Ok(())
    }
}

/// Raw simulated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    /// Observed response (`min(event, censor)` under censoring).
    pub y: Vec<f64>,
    /// Uncensored-event indicators.
    pub delta: Vec<bool>,
    /// Latent event times (equal to `y` without censoring).
    pub event: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub domain: Domain,
}

impl SimData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn censoring_rate(&self) -> f64 {
        self.delta.iter().filter(|&&d| !d).count() as f64 / self.len().max(1) as f64
    }

    pub fn dataset(&self, tau: f64) -> Result<Dataset> {
        let delta = self.delta.iter().any(|&d| !d).then(|| self.delta.clone());
        Dataset::new(self.y.clone(), delta, self.z.clone(), self.domain, tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub spec: SimSpec,
    pub train: SimData,
    pub test: SimData,
    pub truth: Truth,
}

/// Draws training and test sets from independent streams of one seed.
pub fn generate(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let truth = Truth::new(spec.setting);
    let mut train_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    train_rng.set_stream(0);
    let mut test_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    test_rng.set_stream(1);
    Ok(Simulation {
        spec: *spec,
        train: draw_rows(&truth, spec.n, &mut train_rng),
        test: draw_rows(&truth, spec.n_test, &mut test_rng),
        truth,
    })
}

fn correlated_normals<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    // AR(1) recursion gives corr(z_i, z_j) = 0.75^|i-j| with unit variances
    let innovation = (1.0 - COVARIATE_CORR * COVARIATE_CORR).sqrt();
    let mut out = Vec::with_capacity(k);
    let mut prev: f64 = rng.sample(StandardNormal);
    out.push(prev);
    for _ in 1..k {
        let e: f64 = rng.sample(StandardNormal);
        prev = COVARIATE_CORR * prev + innovation * e;
        out.push(prev);
    }
    out
}

fn draw_covariates<R: Rng + ?Sized>(setting: Setting, rng: &mut R) -> Vec<f64> {
    match setting {
        Setting::A1 | Setting::A2 | Setting::A3 | Setting::A4 => correlated_normals(3, rng),
        Setting::B1 | Setting::B2 => {
            let z1 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let mut z = vec![z1];
            z.extend(correlated_normals(2, rng));
            z
        }
        Setting::C1 | Setting::C2 => {
            let u = Uniform::new(-2.0, 2.0).expect("valid range");
            vec![u.sample(rng), u.sample(rng)]
        }
    }
}

fn draw_censoring<R: Rng + ?Sized>(setting: Setting, rng: &mut R) -> f64 {
    match setting {
        Setting::B1 => Exp::new(1.0f64).expect("unit rate").sample(rng).min(1.5),
        Setting::B2 => rng.random_range(1.0..3.5),
        _ => f64::INFINITY,
    }
}

fn draw_rows<R: Rng + ?Sized>(truth: &Truth, n: usize, rng: &mut R) -> SimData {
    let setting = truth.setting;
    let law = setting.error_law();
    let mut data = SimData {
        y: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        event: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        domain: setting.domain(),
    };
    for _ in 0..n {
        let z = draw_covariates(setting, rng);
        let event = truth.response(truth.location(&z) + law.sample(rng));
        let censor = draw_censoring(setting, rng);
        data.y.push(event.min(censor));
        data.delta.push(event <= censor);
        data.event.push(event);
        data.z.push(z);
    }
    data
}
