use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonzero B-spline values of degree `deg` at `x` on a clamped knot vector.
///
/// Returns the span index `i` such that the values written to `out[0..=deg]`
/// belong to basis functions `i - deg ..= i`. `x` equal to the right end of
/// the knot vector is assigned to the last nonempty span.
pub fn bspline_basis(knots: &[f64], deg: usize, x: f64, out: &mut [f64]) -> usize {
    let n_basis = knots.len() - deg - 1;
    let span = find_span(knots, deg, n_basis, x);
    let mut left = [0.0f64; 16];
    let mut right = [0.0f64; 16];
    assert!(deg < 16, "spline degree too large");
    out[0] = 1.0;
    for j in 1..=deg {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { out[r] / denom } else { 0.0 };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    span
}

fn find_span(knots: &[f64], deg: usize, n_basis: usize, x: f64) -> usize {
    if x >= knots[n_basis] {
        // last nonempty span
        let mut i = n_basis - 1;
        while i > deg && knots[i] >= knots[n_basis] {
            i -= 1;
        }
        return i;
    }
    if x <= knots[deg] {
        return deg;
    }
    // knots[span] <= x < knots[span + 1]
    let idx = knots[deg..=n_basis].partition_point(|&k| k <= x);
    deg + idx - 1
}

/// I-spline basis on `[0, tau]` with fixed interior knots.
///
/// With `J` interior knots and order `r` there are `K = J + r` functions. The
/// derivative of each I-spline is the corresponding order-`r` M-spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    interior: Vec<f64>,
    order: usize,
    tau: f64,
    #[serde(skip)]
    ispline_knots: Vec<f64>,
    #[serde(skip)]
    mspline_knots: Vec<f64>,
}

impl BasisSpec {
    pub fn new(interior: &[f64], order: usize, tau: f64) -> Result<Self> {
        if !(2..=4).contains(&order) {
            return Err(Error::invalid(format!("spline order must be 2, 3 or 4, got {order}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        for w in interior.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("interior knots must be strictly increasing"));
            }
        }
        if let Some(k) = interior.iter().find(|&&k| !(k > 0.0 && k < tau)) {
            return Err(Error::domain(format!("interior knot {k} outside (0, {tau})")));
        }
        let clamp = |reps: usize| {
            let mut v = vec![0.0; reps];
            v.extend_from_slice(interior);
            v.extend(std::iter::repeat_n(tau, reps));
            v
        };
        Ok(Self {
            interior: interior.to_vec(),
            order,
            tau,
            ispline_knots: clamp(order + 1),
            mspline_knots: clamp(order),
        })
    }

    /// Rebuilds the derived knot vectors after deserialization.
    pub fn rebuild(&self) -> Result<Self> {
        Self::new(&self.interior, self.order, self.tau)
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of basis functions `K = J + r`.
    pub fn n_basis(&self) -> usize {
        self.interior.len() + self.order
    }

    /// Writes I-spline values into `values` and M-spline values into
    /// `derivs`; both must have length `n_basis()`.
    pub fn eval_into(&self, s: f64, values: &mut [f64], derivs: &mut [f64]) {
        let k = self.n_basis();
        let r = self.order;
        debug_assert!(values.len() == k && derivs.len() == k);
        let s = s.clamp(0.0, self.tau);

        // I_m(s) = sum_{j > m} N_{j, deg r}(s) on the (r+1)-clamped knots.
        let mut buf = [0.0f64; 16];
        let span = bspline_basis(&self.ispline_knots, r, s, &mut buf);
        let first = span - r;
        // tail sums over j = first..=span, everything beyond span is zero and
        // everything below first sums to one
        let mut tail = 0.0;
        for m in (0..k).rev() {
            let j = m + 1;
            if j > span {
                values[m] = 0.0;
                continue;
            }
            if j < first {
                values[m] = 1.0;
                continue;
            }
            tail += buf[j - first];
            values[m] = tail.min(1.0);
        }

        derivs.iter_mut().for_each(|d| *d = 0.0);
        let span = bspline_basis(&self.mspline_knots, r - 1, s, &mut buf);
        let first = span + 1 - r;
        for (offset, &b) in buf[..r].iter().enumerate() {
            let m = first + offset;
            let width = self.mspline_knots[m + r] - self.mspline_knots[m];
            if width > 0.0 {
                derivs[m] = r as f64 * b / width;
            }
        }
    }

    pub fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.n_basis();
        let mut values = vec![0.0; k];
        let mut derivs = vec![0.0; k];
        self.eval_into(s, &mut values, &mut derivs);
        (values, derivs)
    }

    pub fn ispline(&self, s: f64) -> Vec<f64> {
        self.eval(s).0
    }

    pub fn mspline(&self, s: f64) -> Vec<f64> {
        self.eval(s).1
    }

    fn check_point(&self, s: f64) -> Result<()> {
        if s.is_finite() && (0.0..=self.tau).contains(&s) {
            Ok(())
        } else {
            Err(Error::domain(format!("{s} outside [0, {}]", self.tau)))
        }
    }
}

fn check_alpha(alpha: &[f64], spec: &BasisSpec) -> Result<()> {
    if alpha.len() != spec.n_basis() {
        return Err(Error::invalid(format!(
            "expected {} spline coefficients, got {}",
            spec.n_basis(),
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::invalid(format!("spline coefficients must be positive, got {a}")));
    }
    Ok(())
}

/// `H(s) = sum_j alpha_j B_j(s)`.
pub fn eval_h(alpha: &[f64], spec: &BasisSpec, s: f64) -> Result<f64> {
    check_alpha(alpha, spec)?;
    spec.check_point(s)?;
    Ok(alpha.iter().zip(spec.ispline(s)).map(|(a, b)| a * b).sum())
}

/// `H'(s) = sum_j alpha_j B'_j(s)`.
pub fn eval_h_prime(alpha: &[f64], spec: &BasisSpec, s: f64) -> Result<f64> {
    check_alpha(alpha, spec)?;
    spec.check_point(s)?;
    Ok(alpha.iter().zip(spec.mspline(s)).map(|(a, b)| a * b).sum())
}
