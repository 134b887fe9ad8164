//! Train the from-scratch LSTM on a noisy sine wave and report holdout
//! accuracy and a short forecast.
//!
//! Run: cargo run --example lstm_sine

use causalts::ingest::make_windows;
use causalts::lstm::{train, TrainConfig};
use causalts::rng::Xoshiro256;
use causalts::timeseries::{SeriesFrame, TimeIndex};
use chrono::{Days, NaiveDate};

fn main() -> causalts::Result<()> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let n = 600u64;
    let index = TimeIndex::span(start, start + Days::new(n - 1))?;
    let mut rng = Xoshiro256::for_stage(3, "example-sine");
    let values: Vec<Option<f64>> = (0..n)
        .map(|t| Some((t as f64 * 0.12).sin() + 0.05 * rng.normal()))
        .collect();
    let mut frame = SeriesFrame::new(index);
    frame.insert_column("y", values)?;

    let set = make_windows(&frame, "y", &[], 7)?;
    let config = TrainConfig {
        hidden_dim: 16,
        epochs: 60,
        ..TrainConfig::default()
    };
    let (model, report) = train(&set, &config)?;
    println!(
        "trained {} epochs, train MSE {:.5}, validation MSE {:.5}",
        report.epochs_run, report.train_mse, report.validation_mse
    );

    println!("last 5 one-step predictions vs actual:");
    for sample in set.samples.iter().rev().take(5).rev() {
        let pred = model.predict_one(&sample.window, &set.feature_names)?;
        println!(
            "  {}  actual {:+.4}  predicted {:+.4}",
            sample.date, sample.target, pred
        );
    }
    Ok(())
}
