//! Causal analysis toolkit for daily multivariate time series.
//!
//! The pipeline has three stages:
//! 1. factor screening via Kraskov k-nearest-neighbor mutual information
//!    ([`mutual_info`]),
//! 2. nonlinear Granger-causality testing with an LSTM or Prophet-style base
//!    forecaster and a paired Wilcoxon signed-rank test ([`granger`]),
//! 3. counterfactual intervention quantification: a model trained only on
//!    pre-shock data is rolled forward and compared against actuals
//!    ([`counterfactual`]).
//!
//! Supporting modules: [`timeseries`] (frames and deterministic feature
//! transforms), [`ingest`] (CSV loading and supervised windowing), [`lstm`]
//! and [`prophet`] (the two base forecasters), [`synth`] (seeded generators
//! with known ground truth), [`report`] (CSV/SVG emission), and [`rng`]
//! (the documented PRNG every seeded component draws from).

pub mod counterfactual;
pub mod error;
pub mod granger;
pub mod ingest;
pub mod lstm;
pub mod mutual_info;
pub mod prophet;
pub mod report;
pub mod rng;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
