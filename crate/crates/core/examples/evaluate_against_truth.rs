//! Scores a fitted posterior and the generating law side by side on the same
//! held-out rows.
//!
//! ```bash
//! cargo run --release --example evaluate_against_truth
//! ```

use ultm::cli::evaluate_setting;
use ultm::config::RunConfig;
use ultm::eval::Setting;

fn main() -> ultm::Result<()> {
    for setting in [Setting::A1, Setting::B2] {
        let cfg = RunConfig { setting, n: 200, n_test: 50, seed: 3, ..RunConfig::default() };
        for oracle in [true, false] {
            let r = evaluate_setting(&cfg, oracle)?;
            let m = &r.metrics;
            println!(
                "{setting} {:<9} rimse {:.3}  mae {}  baseline {}  coverage {}  c-index {}  ibs {}",
                r.predictor,
                m.rimse.unwrap_or(f64::NAN),
                fmt(m.mae),
                fmt(m.baseline_mae),
                fmt(m.coverage),
                fmt(m.c_index),
                fmt(m.ibs.as_ref().map(|i| i.value)),
            );
        }
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}
