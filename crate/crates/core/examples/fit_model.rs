//! Fits the transformation model to simulated complete data and summarizes
//! mixing and the direction of the regression coefficients.
//!
//! ```bash
//! cargo run --release --example fit_model
//! ```

use ultm::cli::diagnostics_from_chains;
use ultm::eval::{generate, Setting, SimSpec, Truth};
use ultm::inference::{beta_draws, project_beta};
use ultm::model::{Hyperparams, TransformationModel};
use ultm::sampler::{run_chains, SamplerConfig};

fn main() -> ultm::Result<()> {
    let sim = generate(&SimSpec::new(Setting::A1, 200, 20, 1))?;
    let data = sim.train.dataset(5.0)?;
    let (knots, model) = TransformationModel::from_data(&data, &Hyperparams::default())?;
    println!("interior knots {:?}", knots.knots);

    let chains = run_chains(&model, &SamplerConfig { seed: 1, ..SamplerConfig::default() }, None)?;
    println!("divergences {} of {}", chains.divergences(), chains.n_chains() * chains.n_draws());

    let report = diagnostics_from_chains(&chains, &model)?;
    for s in &report.scalars {
        println!("{:<8} R-hat {:.3}  ESS {:>6.0}  W {:.4e}", s.name, s.rhat, s.ess, s.w);
    }

    // only the direction of beta is identified
    let proj = project_beta(&beta_draws(&chains, &model.layout()), 0.95)?;
    let truth = Truth::new(Setting::A1).beta().expect("setting a has a linear predictor");
    let norm = truth.iter().map(|b| b * b).sum::<f64>().sqrt();
    for j in 0..proj.point.len() {
        println!(
            "beta_{}: {:.3} [{:.3}, {:.3}]  true direction {:.3}",
            j + 1,
            proj.point[j],
            proj.lower[j],
            proj.upper[j],
            truth[j] / norm
        );
    }
    Ok(())
}
