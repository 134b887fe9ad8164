//! Fit the decomposable trend + seasonality model to two years of synthetic
//! daily data and print the recovered components.
//!
//! Run: cargo run --example prophet_trend

use causalts::prophet::{fit, predict_components, ProphetConfig};
use causalts::rng::Xoshiro256;
use causalts::timeseries::TimeIndex;
use chrono::{Days, NaiveDate};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

fn main() -> causalts::Result<()> {
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    let n = 730u64;
    let index = TimeIndex::span(start, start + Days::new(n - 1))?;
    let mut rng = Xoshiro256::for_stage(5, "example-prophet");
    // slope 0.02/day, weekly wave of amplitude 3, mild noise
    let y: Vec<f64> = (0..n)
        .map(|t| 10.0 + 0.02 * t as f64 + 3.0 * (TAU * t as f64 / 7.0).sin() + 0.2 * rng.normal())
        .collect();

    let config = ProphetConfig {
        yearly_order: 0,
        ..ProphetConfig::default()
    };
    let params = fit(&y, &index, &BTreeMap::new(), &config)?;
    println!(
        "recovered slope {:.5}/day (planted 0.02), intercept {:.3}",
        params.slope_per_day(),
        params.intercept
    );

    let dates = index.dates();
    let comp = predict_components(&params, dates, &BTreeMap::new())?;
    let amp = comp.seasonal[..28]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    println!(
        "weekly component range over four weeks: [{:.3}, {:.3}] (planted +-3)",
        amp.0, amp.1
    );
    Ok(())
}
