use serde::{Deserialize, Serialize};

use super::knots::empirical_quantile;
use super::spline::bspline_basis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionFamily {
    Bspline,
    Fourier,
}

impl std::str::FromStr for ExpansionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bspline" | "b-spline" => Ok(Self::Bspline),
            "fourier" => Ok(Self::Fourier),
            other => Err(Error::invalid(format!("unknown expansion family {other:?}"))),
        }
    }
}

/// Per-covariate state fitted on training data so test rows expand the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnBasis {
    Bspline { knots: Vec<f64>, degree: usize },
    Fourier { lo: f64, period: f64 },
}

/// Additive covariate expansion `z_j -> (phi_j1(z_j), ..., phi_jK(z_j))`.
///
/// B-spline blocks drop their first column so that the blocks do not each
/// sum to one (which would make the expanded design rank deficient).
/// Fourier blocks use alternating sine/cosine harmonics without a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveExpansion {
    family: ExpansionFamily,
    per_covariate: usize,
    columns: Vec<ColumnBasis>,
}

impl AdditiveExpansion {
    /// Fits knot locations / ranges to the columns of `z` (rows are observations).
    pub fn fit(z: &[Vec<f64>], family: ExpansionFamily, per_covariate: usize) -> Result<Self> {
        if per_covariate < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 basis functions per covariate, got {per_covariate}"
            )));
        }
        let p = check_matrix(z)?;
        let mut columns = Vec::with_capacity(p);
        for j in 0..p {
            let mut col: Vec<f64> = z.iter().map(|row| row[j]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let (lo, hi) = (col[0], col[col.len() - 1]);
            if !(hi > lo) {
                return Err(Error::invalid(format!("covariate {} is constant", j + 1)));
            }
            columns.push(match family {
                ExpansionFamily::Bspline => {
                    // per_covariate + 1 functions before dropping the first one
                    let degree = per_covariate.min(3);
                    let n_interior = per_covariate - degree;
                    let pad = 1e-9 * (hi - lo);
                    let mut knots = vec![lo - pad; degree + 1];
                    for i in 1..=n_interior {
                        knots.push(empirical_quantile(&col, i as f64 / (n_interior + 1) as f64));
                    }
                    knots.extend(std::iter::repeat_n(hi + pad, degree + 1));
                    for w in knots.windows(2) {
                        if w[1] < w[0] {
                            return Err(Error::invalid("non-monotone expansion knots"));
                        }
                    }
                    ColumnBasis::Bspline { knots, degree }
                }
                ExpansionFamily::Fourier => ColumnBasis::Fourier { lo, period: hi - lo },
            });
        }
        Ok(Self { family, per_covariate, columns })
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len() * self.per_covariate
    }

    pub fn family(&self) -> ExpansionFamily {
        self.family
    }

    pub fn transform(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let p = check_matrix(z)?;
        if p != self.columns.len() {
            return Err(Error::invalid(format!(
                "expansion fitted on {} covariates, got {p}",
                self.columns.len()
            )));
        }
        Ok(z.iter().map(|row| self.transform_row(row)).collect())
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let k = self.per_covariate;
        let mut out = Vec::with_capacity(self.n_columns());
        for (x, basis) in row.iter().zip(&self.columns) {
            match basis {
                ColumnBasis::Bspline { knots, degree } => {
                    let lo = knots[0];
                    let hi = knots[knots.len() - 1];
                    let x = x.clamp(lo, hi);
                    let mut buf = [0.0; 16];
                    let span = bspline_basis(knots, *degree, x, &mut buf);
                    let mut full = vec![0.0; k + 1];
                    for (o, &b) in buf[..=*degree].iter().enumerate() {
                        full[span - degree + o] = b;
                    }
                    out.extend_from_slice(&full[1..]);
                }
                ColumnBasis::Fourier { lo, period } => {
                    let t = 2.0 * std::f64::consts::PI * (x - lo) / period;
                    for i in 0..k {
                        let harmonic = (i / 2 + 1) as f64;
                        out.push(if i % 2 == 0 { (harmonic * t).sin() } else { (harmonic * t).cos() });
                    }
                }
            }
        }
        out
    }
}

fn check_matrix(z: &[Vec<f64>]) -> Result<usize> {
    let first = z.first().ok_or_else(|| Error::invalid("empty covariate matrix"))?;
    let p = first.len();
    for row in z {
        if row.len() != p {
            return Err(Error::invalid("ragged covariate matrix"));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate value"));
        }
    }
    Ok(p)
}
