//! Generates every simulation setting and prints its basic shape.
//!
//! ```bash
//! cargo run --release --example simulate_settings
//! ```

use ultm::eval::{generate, Setting, SimSpec};

fn main() -> ultm::Result<()> {
    println!("{:<4} {:>9} {:>4} {:>10} {:>10} {:>14}", "set", "domain", "p", "censoring", "median y", "median y | z1");
    for setting in Setting::ALL {
        let sim = generate(&SimSpec::new(setting, 200, 50, 1))?;
        let mut y = sim.train.y.clone();
        y.sort_by(f64::total_cmp);
        // true conditional median at the first test row's covariates
        let z = &sim.test.z[0];
        println!(
            "{:<4} {:>9} {:>4} {:>10.3} {:>10.4} {:>14.4}",
            setting.name(),
            format!("{:?}", setting.domain()).to_lowercase(),
            setting.n_covariates(),
            sim.train.censoring_rate(),
            y[y.len() / 2],
            sim.truth.quantile(0.5, z)
        );
    }
    Ok(())
}
