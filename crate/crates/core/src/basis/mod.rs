//! Response transform, quantile knots and the monotone spline basis.
//!
//! Responses are mapped into `(0, tau)` with the tau-sigmoid; the monotone
//! transformation `H` on that interval is a positive combination of I-spline
//! functions whose interior knots sit at empirical quantiles of the
//! transformed data.

mod additive;
mod knots;
mod spline;

pub use additive::{AdditiveExpansion, ExpansionFamily};
pub use knots::{
    empirical_cdf, empirical_quantile, interpolate_knots_censored, select_quantile_knots,
    KnotSelection, DEFAULT_KNOT_GAP,
};
pub use spline::{bspline_basis, eval_h, eval_h_prime, BasisSpec};

use crate::error::{Error, Result};

/// `tau / (1 + exp(-y))`.
pub fn tau_sigmoid(y: f64, tau: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::invalid(format!("non-finite response {y}")));
    }
    check_tau(tau)?;
    Ok(tau_sigmoid_unchecked(y, tau))
}

#[inline]
pub(crate) fn tau_sigmoid_unchecked(y: f64, tau: f64) -> f64 {
    if y >= 0.0 {
        tau / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        tau * e / (1.0 + e)
    }
}

/// Derivative of [`tau_sigmoid`] with respect to `y`.
pub fn tau_sigmoid_derivative(y: f64, tau: f64) -> f64 {
    let s = tau_sigmoid_unchecked(y, 1.0);
    tau * s * (1.0 - s)
}

/// Inverse of [`tau_sigmoid`]: `ln(t / (tau - t))`.
pub fn tau_sigmoid_inverse(t: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(t > 0.0 && t < tau) {
        return Err(Error::domain(format!("{t} is outside (0, {tau})")));
    }
    Ok((t / tau).ln() - ((tau - t) / tau).ln())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must be positive and finite, got {tau}")))
    }
}
