//! Adaptive tuning of the scale-prior rate: each round samples, compares the
//! within-chain variance of `H` at the criterion knot with the prior
//! information threshold, and moves up the schedule until the check passes.
//!
//! ```bash
//! cargo run --release --example tune_informativeness
//! ```

use ultm::eval::{generate, Setting, SimSpec};
use ultm::informativeness::{curve_grid, tune, DEFAULT_ROUND_BUDGET, DEFAULT_ZETA_SCHEDULE};
use ultm::model::Hyperparams;
use ultm::sampler::SamplerConfig;

fn main() -> ultm::Result<()> {
    let sim = generate(&SimSpec::new(Setting::A2, 200, 10, 1))?;
    let data = sim.train.dataset(5.0)?;
    let start = Hyperparams { zeta: 0.01, ..Hyperparams::default() };
    let cfg = SamplerConfig { seed: 1, ..SamplerConfig::default() };
    let outcome = tune(&data, &start, &DEFAULT_ZETA_SCHEDULE, DEFAULT_ROUND_BUDGET, &cfg)?;

    let report = &outcome.report;
    for (i, r) in report.rounds.iter().enumerate() {
        println!(
            "round {}: zeta {:<5} W {:>10.3}  threshold {:>8.3}  passed {:<5}  lp R-hat {:.3}  ESS {:.0}",
            i + 1,
            r.zeta,
            r.within_variance,
            r.threshold,
            r.passed,
            r.rhat_lp,
            r.ess_lp
        );
    }
    println!("criterion knot j0 = {} at s = {:.4}", report.last().j0, report.last().criterion_knot);
    println!("final zeta {} (failed: {})", report.final_zeta, report.failed);

    let mut csv = Vec::new();
    report.write_curve_csv(&mut csv, &curve_grid(0.001, 1.0, 5))?;
    println!("\nthreshold curve samples:\n{}", String::from_utf8_lossy(&csv));
    Ok(())
}
