//! Right-censored survival data: knot interpolation, conditional survival
//! curves, and the C-index and integrated Brier score on a test set.
//!
//! ```bash
//! cargo run --release --example survival_prediction
//! ```

use ultm::eval::{assess, generate, AssessOptions, Setting, SimSpec};
use ultm::inference::{default_grid, Posterior, DEFAULT_HAZARD_CAP};
use ultm::model::{Hyperparams, TransformationModel};
use ultm::sampler::{run_chains, SamplerConfig};

fn main() -> ultm::Result<()> {
    let sim = generate(&SimSpec::new(Setting::B1, 200, 50, 5))?;
    let data = sim.train.dataset(5.0)?;
    let (knots, model) = TransformationModel::from_data(&data, &Hyperparams::default())?;
    println!("censoring rate {:.2}; knots {:?}; inserted {:?}", data.censoring_rate(), knots.knots, knots.inserted);

    let chains = run_chains(&model, &SamplerConfig { seed: 5, ..SamplerConfig::default() }, None)?;
    let posterior = Posterior::from_chains(&chains, model.spec(), &model.layout())?;

    let grid = default_grid(&sim.test.y, sim.test.domain, 6)?;
    let z = &sim.test.z[0];
    let curve = posterior.conditional_survival(z, &grid, DEFAULT_HAZARD_CAP)?;
    println!("\n{:>6} {:>9} {:>9} {:>9}", "t", "S(t|z)", "Lambda", "true S");
    for (g, &t) in grid.iter().enumerate() {
        println!(
            "{t:>6.3} {:>9.4} {:>9.4} {:>9.4}",
            curve.survival[g],
            curve.cumulative_hazard[g],
            sim.truth.survival(t, z)
        );
    }

    let m = assess(&posterior, &sim.train, &sim.test, Some(&sim.truth), &AssessOptions::default())?;
    let ibs = m.ibs.expect("positive responses are scored by IBS");
    println!("\nC-index {:.3}; IBS {:.4} up to {:.3}", m.c_index.unwrap_or(f64::NAN), ibs.value, ibs.horizon);
    println!("point predictions use the {:.2} predictive quantile (training censoring rate)", m.point_level);
    Ok(())
}
