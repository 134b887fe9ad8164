//! Quantify a planted step shock: an AR(1) series gains +10 units from a
//! known anchor date. The counterfactual rollout, trained only on pre-anchor
//! data, should forecast the path without the shock, so the monthly
//! (counterfactual - actual) deltas recover roughly -10.
//!
//! Run: cargo run --example counterfactual_step

use causalts::counterfactual::{
    actual_series, counterfactual_forecast, factual_forecast, monthly_deltas, InterventionConfig,
};
use causalts::lstm::TrainConfig;
use causalts::synth::{generate, GeneratorKind, GeneratorSpec};
use chrono::NaiveDate;

fn main() -> causalts::Result<()> {
    let spec = GeneratorSpec {
        kind: GeneratorKind::StepIntervention {
            base: Box::new(GeneratorKind::Ar1 {
                phi: 0.5,
                sigma: 1.0,
                mean: 50.0,
            }),
            anchor_index: 900,
            effect: 10.0,
        },
        n: 1100,
        seed: 23,
    };
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let generated = generate(&spec, start)?;
    let anchor = generated.anchor_date().expect("step spec has an anchor");

    let mut config =
        InterventionConfig::gas_default(anchor, generated.frame.index().last(), vec![]);
    config.tau = 3;
    config.lstm = TrainConfig {
        hidden_dim: 16,
        epochs: 40,
        learning_rate: 5e-3,
        ..TrainConfig::default()
    };

    let actual = actual_series(&generated.frame, "y", &config)?;
    let factual = factual_forecast(&generated.frame, "y", &config)?;
    let cf = counterfactual_forecast(&generated.frame, "y", &config)?;
    let report = monthly_deltas("y", &actual, &factual, &cf)?;

    println!("anchor {anchor}, planted effect +10");
    println!(
        "{:>8} {:>9} {:>9} {:>9} {:>10}",
        "month", "actual", "no-shock", "delta", "delta %"
    );
    for row in &report.rows {
        println!(
            "{:>8} {:>9.2} {:>9.2} {:>9.2} {:>9.2}%",
            row.month,
            row.actual,
            row.forecast_nowar,
            row.delta_nowar,
            row.delta_nowar_pct.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
