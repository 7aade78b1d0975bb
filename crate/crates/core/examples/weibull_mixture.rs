//! Truncated stick-breaking mixture of Weibull kernels.
//!
//! ```bash
//! cargo run --release --example weibull_mixture
//! ```

use ultm::mixture::{
    stick_breaking_weights, sticks_from_weights, truncation_error_bound, truncation_for_tolerance, WeibullMixture,
};

fn main() -> ultm::Result<()> {
    let v = [0.5, 0.4, 0.3, 0.6];
    let weights = stick_breaking_weights(&v)?;
    println!("weights {weights:?} (sum {})", weights.iter().sum::<f64>());
    println!("sticks recovered {:?}", sticks_from_weights(&weights)?);

    let mix = WeibullMixture::new(weights, vec![0.5, 1.0, 2.0, 4.0, 8.0], vec![1.5, 2.0, 1.0, 3.0, 0.8])?;
    println!("\n{:>6} {:>10} {:>10} {:>10}", "x", "cdf", "survival", "logpdf");
    for x in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        println!("{x:>6.1} {:>10.5} {:>10.5} {:>10.4}", mix.cdf(x)?, mix.survival(x)?, mix.logpdf(x)?);
    }

    println!("\nL1 truncation bound for n = 200, c = 1:");
    for l in [6, 12, 20, 30] {
        println!("  L = {l:>2}: {:.3e}", truncation_error_bound(200, l, 1.0)?);
    }
    println!("smallest L with bound <= 1e-3: {}", truncation_for_tolerance(200, 1.0, 1e-3));
    Ok(())
}
