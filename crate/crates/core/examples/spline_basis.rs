//! Monotone I-spline basis on quantile knots, including knot interpolation
//! for right-censored responses.
//!
//! ```bash
//! cargo run --release --example spline_basis
//! ```

use ultm::basis::{eval_h, eval_h_prime, interpolate_knots_censored, select_quantile_knots, tau_sigmoid, BasisSpec};
use ultm::eval::{generate, Setting, SimSpec};

fn main() -> ultm::Result<()> {
    let tau = 5.0;
    let sim = generate(&SimSpec::new(Setting::B1, 200, 10, 3))?;
    let all: Vec<f64> = sim.train.y.iter().map(|&y| tau_sigmoid(y.ln(), tau)).collect::<ultm::Result<_>>()?;
    let uncensored: Vec<f64> = all.iter().zip(&sim.train.delta).filter(|(_, &d)| d).map(|(&t, _)| t).collect();

    let plain = select_quantile_knots(&uncensored, 4)?;
    let interpolated = interpolate_knots_censored(&all, &uncensored, 4, 0.05)?;
    println!("censoring rate  {:.3}", sim.train.censoring_rate());
    println!("quantile knots  {:?}", plain.knots);
    println!("with censoring  {:?} (inserted {:?})", interpolated.knots, interpolated.inserted);

    let spec = BasisSpec::new(&interpolated.knots, 4, tau)?;
    let alpha: Vec<f64> = (1..=spec.n_basis()).map(|j| j as f64 * 0.5).collect();
    println!("\n{:>6} {:>10} {:>10}", "s", "H(s)", "H'(s)");
    for i in 0..=10 {
        let s = tau * i as f64 / 10.0;
        println!("{s:>6.2} {:>10.4} {:>10.4}", eval_h(&alpha, &spec, s)?, eval_h_prime(&alpha, &spec, s)?);
    }
    Ok(())
}
