//! Decomposable additive forecaster: piecewise-linear trend with changepoint
//! ramps, yearly/weekly Fourier seasonality, and standardized exogenous
//! regressors, fit by ridge-penalized least squares.
//!
//! The trend is parameterized with hinge ("ramp") columns max(0, t - s_i) in
//! scaled time, which keeps it continuous by construction. Point forecasts
//! only; no sampling.

use chrono::NaiveDate;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeseries::{Standardizer, TimeIndex};

const MODEL_FORMAT_VERSION: u32 = 1;

pub const YEARLY_PERIOD_DAYS: f64 = 365.25;
pub const WEEKLY_PERIOD_DAYS: f64 = 7.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProphetConfig {
    pub changepoints: usize,
    /// Prefix of history (as a fraction) eligible for changepoints.
    pub changepoint_range: f64,
    pub yearly_order: usize,
    pub weekly_order: usize,
    /// Ridge penalty on changepoint slope adjustments.
    pub lambda_trend: f64,
    /// Ridge penalty on Fourier and regressor coefficients.
    pub lambda_reg: f64,
    pub regressors: Vec<String>,
}

impl Default for ProphetConfig {
    fn default() -> Self {
        Self {
            changepoints: 25,
            changepoint_range: 0.8,
            yearly_order: 10,
            weekly_order: 3,
            lambda_trend: 1.0,
            lambda_reg: 0.1,
            regressors: Vec::new(),
        }
    }
}

impl ProphetConfig {
    fn validate(&self) -> Result<()> {
        if self.lambda_trend < 0.0 || self.lambda_reg < 0.0 {
            return Err(Error::InvalidArgument("penalties must be >= 0".into()));
        }
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(Error::InvalidArgument(
                "changepoint range must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Changepoint positions in scaled time, uniform over the eligible prefix.
    pub fn changepoint_positions(&self) -> Vec<f64> {
        (1..=self.changepoints)
            .map(|i| self.changepoint_range * i as f64 / (self.changepoints + 1) as f64)
            .collect()
    }
}

/// Fitted parameters plus everything needed to rebuild design columns on new
/// dates (time scaling and regressor standardization).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProphetParams {
    pub format_version: u32,
    pub config: ProphetConfig,
    /// Training time origin and span in days; scaled t = days / span.
    pub origin: NaiveDate,
    pub span_days: f64,
    pub intercept: f64,
    /// Base slope in scaled time.
    pub slope: f64,
    pub deltas: Vec<f64>,
    pub yearly: Vec<f64>,
    pub weekly: Vec<f64>,
    pub beta: Vec<f64>,
    pub regressor_stats: Vec<Standardizer>,
}

impl ProphetParams {
    /// Trend slope in original units per day.
    pub fn slope_per_day(&self) -> f64 {
        self.slope / self.span_days
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if params.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                params.format_version
            )));
        }
        Ok(params)
    }
}

/// Named design-matrix block boundaries (columns are in this order).
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
}

fn fourier_block(days: f64, period: f64, order: usize, row: &mut Vec<f64>) {
    for m in 1..=order {
        let angle = 2.0 * std::f64::consts::PI * m as f64 * days / period;
        row.push(angle.sin());
        row.push(angle.cos());
    }
}

/// Build the design matrix for the given dates.
///
/// Columns: intercept, scaled time, one ramp per changepoint, yearly then
/// weekly sin/cos pairs, then standardized regressors.
pub fn design_matrix(
    dates: &[NaiveDate],
    regressors: &BTreeMap<String, Vec<f64>>,
    config: &ProphetConfig,
    origin: NaiveDate,
    span_days: f64,
    regressor_stats: &[Standardizer],
) -> Result<DesignMatrix> {
    config.validate()?;
    if config.regressors.len() != regressor_stats.len() {
        return Err(Error::InvalidArgument(
            "regressor stats do not match config".into(),
        ));
    }
    for name in &config.regressors {
        let col = regressors
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing regressor {name}")))?;
        if col.len() != dates.len() {
            return Err(Error::InvalidArgument(format!(
                "regressor {name} has {} values for {} dates",
                col.len(),
                dates.len()
            )));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regressor {name} has missing or non-finite values"
            )));
        }
    }

    let positions = config.changepoint_positions();
    let mut labels = vec!["intercept".to_string(), "t".to_string()];
    for (i, s) in positions.iter().enumerate() {
        labels.push(format!("ramp_{i}@{s:.4}"));
    }
    for m in 1..=config.yearly_order {
        labels.push(format!("yearly_sin_{m}"));
        labels.push(format!("yearly_cos_{m}"));
    }
    for m in 1..=config.weekly_order {
        labels.push(format!("weekly_sin_{m}"));
        labels.push(format!("weekly_cos_{m}"));
    }
    for name in &config.regressors {
        labels.push(format!("reg:{name}"));
    }

    let p = labels.len();
    let mut data = Vec::with_capacity(dates.len() * p);
    for (r, date) in dates.iter().enumerate() {
        let days = (*date - origin).num_days() as f64;
        let t = days / span_days;
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.push(t);
        for s in &positions {
            row.push((t - s).max(0.0));
        }
        fourier_block(days, YEARLY_PERIOD_DAYS, config.yearly_order, &mut row);
        fourier_block(days, WEEKLY_PERIOD_DAYS, config.weekly_order, &mut row);
        for (name, stats) in config.regressors.iter().zip(regressor_stats) {
            row.push(stats.apply(regressors[name][r]));
        }
        data.extend_from_slice(&row);
    }
    Ok(DesignMatrix {
        matrix: DMatrix::from_row_slice(dates.len(), p, &data),
        labels,
    })
}

/// Fit by solving the ridge normal equations; intercept and base slope are
/// unpenalized, ramps carry `lambda_trend`, Fourier and regressors
/// `lambda_reg`.
pub fn fit(
    y: &[f64],
    index: &TimeIndex,
    regressors: &BTreeMap<String, Vec<f64>>,
    config: &ProphetConfig,
) -> Result<ProphetParams> {
    config.validate()?;
    let dates = index.dates();
    if y.len() != dates.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} dates",
            y.len(),
            dates.len()
        )));
    }
    let origin = index.first();
    let span_days = ((index.last() - origin).num_days() as f64).max(1.0);

    let mut regressor_stats = Vec::with_capacity(config.regressors.len());
    for name in &config.regressors {
        let col = regressors
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing regressor {name}")))?;
        let wrapped: Vec<Option<f64>> = col.iter().map(|v| Some(*v)).collect();
        regressor_stats.push(Standardizer::fit_lenient(&wrapped)?);
    }

    let design = design_matrix(dates, regressors, config, origin, span_days, &regressor_stats)?;
    let p = design.labels.len();
    if y.len() < 2 * p {
        return Err(Error::InvalidArgument(format!(
            "need >= {} observations for {p} design columns, got {}",
            2 * p,
            y.len()
        )));
    }

    let x = &design.matrix;
    let mut xtx = x.transpose() * x;
    let n_cp = config.changepoints;
    for (j, label) in design.labels.iter().enumerate() {
        let penalty = if label.starts_with("ramp_") {
            config.lambda_trend
        } else if j >= 2 + n_cp {
            config.lambda_reg
        } else {
            0.0
        };
        xtx[(j, j)] += penalty;
    }
    let xty = x.transpose() * DVector::from_column_slice(y);
    let chol = Cholesky::new(xtx).ok_or_else(|| {
        Error::SingularSystem("normal equations not positive definite; add penalty".into())
    })?;
    // rank deficiency can slip past a floating-point factorization; a
    // collapsed pivot on the Cholesky diagonal is the reliable symptom
    let diag = chol.l_dirty();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for j in 0..p {
        let d = diag[(j, j)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmin <= dmax * 1e-6 {
        return Err(Error::SingularSystem(
            "normal equations numerically singular; add penalty".into(),
        ));
    }
    let theta = chol.solve(&xty);

    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Vec<f64> {
        let out = (0..n).map(|i| theta[*pos + i]).collect();
        *pos += n;
        out
    };
    let intercept = theta[pos];
    pos += 1;
    let slope = theta[pos];
    pos += 1;
    let deltas = take(&mut pos, n_cp);
    let yearly = take(&mut pos, 2 * config.yearly_order);
    let weekly = take(&mut pos, 2 * config.weekly_order);
    let beta = take(&mut pos, config.regressors.len());

    Ok(ProphetParams {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        origin,
        span_days,
        intercept,
        slope,
        deltas,
        yearly,
        weekly,
        beta,
        regressor_stats,
    })
}

/// Additive components of a prediction, summing to the forecast.
#[derive(Debug, Clone)]
pub struct Components {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub regressor: Vec<f64>,
}

pub fn predict_components(
    params: &ProphetParams,
    dates: &[NaiveDate],
    regressors: &BTreeMap<String, Vec<f64>>,
) -> Result<Components> {
    let config = &params.config;
    for name in &config.regressors {
        let col = regressors
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing regressor {name}")))?;
        if col.len() != dates.len() || col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regressor {name} incomplete on requested dates"
            )));
        }
    }
    let positions = config.changepoint_positions();
    let mut trend = Vec::with_capacity(dates.len());
    let mut seasonal = Vec::with_capacity(dates.len());
    let mut regressor = Vec::with_capacity(dates.len());
    for (r, date) in dates.iter().enumerate() {
        let days = (*date - params.origin).num_days() as f64;
        let t = days / params.span_days;
        let mut g = params.intercept + params.slope * t;
        for (s, delta) in positions.iter().zip(&params.deltas) {
            g += delta * (t - s).max(0.0);
        }
        trend.push(g);

        let mut row = Vec::new();
        fourier_block(days, YEARLY_PERIOD_DAYS, config.yearly_order, &mut row);
        let mut sea: f64 = row.iter().zip(&params.yearly).map(|(a, b)| a * b).sum();
        row.clear();
        fourier_block(days, WEEKLY_PERIOD_DAYS, config.weekly_order, &mut row);
        sea += row.iter().zip(&params.weekly).map(|(a, b)| a * b).sum::<f64>();
        seasonal.push(sea);

        let mut reg = 0.0;
        for ((name, stats), b) in config
            .regressors
            .iter()
            .zip(&params.regressor_stats)
            .zip(&params.beta)
        {
            reg += b * stats.apply(regressors[name][r]);
        }
        regressor.push(reg);
    }
    Ok(Components {
        trend,
        seasonal,
        regressor,
    })
}

/// Point forecast on the requested dates; the trend extrapolates linearly
/// with the final segment slope beyond the training range.
pub fn predict(
    params: &ProphetParams,
    dates: &[NaiveDate],
    regressors: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<f64>> {
    let c = predict_components(params, dates, regressors)?;
    Ok((0..dates.len())
        .map(|i| c.trend[i] + c.seasonal[i] + c.regressor[i])
        .collect())
}
