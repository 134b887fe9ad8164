//! Counterfactual intervention engine.
//!
//! Two forecast arms over the evaluation window [anchor, horizon]:
//! - factual: model trained on the full history including the shock dummy,
//!   producing one-step predictions from observed lagged inputs;
//! - counterfactual: model trained only on pre-anchor data without the dummy,
//!   rolled forward recursively with predicted target values feeding its own
//!   lag features.
//!
//! Monthly aggregation then yields the delta report (forecast minus actual,
//! in original units and percent).

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::granger::BaseModel;
use crate::ingest::{make_windows, SupervisedSet};
use crate::lstm::{self, LstmModel, TrainConfig};
use crate::prophet::{self, ProphetConfig};
use crate::timeseries::{SeriesFrame, TimeIndex};

/// Minimum pre-anchor calendar span for counterfactual training, in days.
pub const MIN_PRE_ANCHOR_DAYS: i64 = 730;

/// Days of a calendar month that must be covered for the month to enter the
/// report.
pub const MIN_DAYS_PER_MONTH: usize = 15;

/// How exogenous covariates are fed into the counterfactual rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExoPolicy {
    /// Use the actually observed post-anchor covariate values.
    Observed,
    /// Hold every covariate at its last pre-anchor value.
    Frozen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionConfig {
    pub anchor: NaiveDate,
    pub horizon_end: NaiveDate,
    pub base_model: BaseModel,
    pub exo_policy: ExoPolicy,
    /// Covariates frozen at their pre-anchor value even under `Observed`
    /// (for shock-affected supply series).
    #[serde(default)]
    pub freeze_columns: Vec<String>,
    pub tau: usize,
    pub seed: u64,
    /// Control columns (exogenous features). The war dummy is named
    /// separately and only enters the factual arm.
    pub controls: Vec<String>,
    pub war_column: String,
    pub lstm: TrainConfig,
    pub prophet: ProphetConfig,
}

impl InterventionConfig {
    pub fn gas_default(anchor: NaiveDate, horizon_end: NaiveDate, controls: Vec<String>) -> Self {
        Self {
            anchor,
            horizon_end,
            base_model: BaseModel::Lstm,
            exo_policy: ExoPolicy::Observed,
            freeze_columns: Vec::new(),
            tau: 7,
            seed: 42,
            controls,
            war_column: "War".to_string(),
            lstm: TrainConfig::default(),
            prophet: ProphetConfig::default(),
        }
    }

    fn validate(&self, frame: &SeriesFrame) -> Result<()> {
        if self.horizon_end <= self.anchor {
            return Err(Error::InvalidArgument(format!(
                "horizon end {} must be after anchor {}",
                self.horizon_end, self.anchor
            )));
        }
        if frame.index().position(self.anchor).is_none() {
            return Err(Error::InvalidArgument(format!(
                "anchor {} outside frame range {}..{}",
                self.anchor,
                frame.index().first(),
                frame.index().last()
            )));
        }
        Ok(())
    }
}

/// A dated forecast or observation series.
pub type DatedSeries = Vec<(NaiveDate, f64)>;

/// Anything that can map a raw-unit window to a one-step prediction.
pub trait WindowForecaster {
    fn predict(&self, window: &[Vec<f64>], feature_names: &[String]) -> Result<f64>;
}

impl WindowForecaster for LstmModel {
    fn predict(&self, window: &[Vec<f64>], feature_names: &[String]) -> Result<f64> {
        self.predict_one(window, feature_names)
    }
}

/// Test stub: predicts the target's most recent lagged value.
pub struct PersistenceStub {
    pub target_index: usize,
}

impl WindowForecaster for PersistenceStub {
    fn predict(&self, window: &[Vec<f64>], _names: &[String]) -> Result<f64> {
        Ok(window.last().expect("non-empty window")[self.target_index])
    }
}

/// Observed values of `column` over [anchor, horizon_end], skipping missing.
pub fn actual_series(frame: &SeriesFrame, column: &str, config: &InterventionConfig) -> Result<DatedSeries> {
    let col = frame.column(column)?;
    Ok(frame
        .index()
        .dates()
        .iter()
        .zip(col)
        .filter(|(d, _)| **d >= config.anchor && **d <= config.horizon_end)
        .filter_map(|(d, v)| v.map(|x| (*d, x)))
        .collect())
}

fn factual_features(config: &InterventionConfig) -> Vec<String> {
    let mut features = config.controls.clone();
    if !features.contains(&config.war_column) {
        features.push(config.war_column.clone());
    }
    features
}

/// One-step factual forecasts over [anchor, horizon_end] from a model
/// trained on the full history with the shock dummy included.
///
/// A missing dummy column is derived from the anchor date (0 before, 1 from
/// the anchor onward).
pub fn factual_forecast(
    frame: &SeriesFrame,
    sector: &str,
    config: &InterventionConfig,
) -> Result<DatedSeries> {
    config.validate(frame)?;
    let features = factual_features(config);
    let mut augmented;
    let frame = if frame.column(&config.war_column).is_err() {
        augmented = frame.clone();
        let dummy: Vec<Option<f64>> = frame
            .index()
            .dates()
            .iter()
            .map(|d| Some(crate::timeseries::war_dummy(*d, config.anchor)))
            .collect();
        augmented.insert_column(&config.war_column, dummy)?;
        &augmented
    } else {
        frame
    };
    let set = make_windows(frame, sector, &features, config.tau)?;
    match config.base_model {
        BaseModel::Lstm => {
            let lstm_config = TrainConfig {
                seed: config.seed,
                ..config.lstm.clone()
            };
            let (model, _) = lstm::train(&set, &lstm_config)?;
            one_step_over_window(&set, &model, config)
        }
        BaseModel::Prophet => prophet_one_step(&set, config),
    }
}

/// One-step predictions of any forecaster over the evaluation window, using
/// observed lagged inputs.
pub fn one_step_over_window(
    set: &SupervisedSet,
    model: &dyn WindowForecaster,
    config: &InterventionConfig,
) -> Result<DatedSeries> {
    let out: DatedSeries = set
        .samples
        .iter()
        .filter(|s| s.date >= config.anchor && s.date <= config.horizon_end)
        .map(|s| Ok((s.date, model.predict(&s.window, &set.feature_names)?)))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::EmptyDataset(
            "no predictable dates inside the evaluation window".into(),
        ));
    }
    Ok(out)
}

fn prophet_one_step(set: &SupervisedSet, config: &InterventionConfig) -> Result<DatedSeries> {
    let reg_names: Vec<String> = set.feature_names.iter().map(|n| format!("{n}@t-1")).collect();
    let regs = |samples: &[crate::ingest::Sample]| {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (j, name) in reg_names.iter().enumerate() {
            out.insert(
                name.clone(),
                samples.iter().map(|s| s.window[set.tau - 1][j]).collect(),
            );
        }
        out
    };
    let dates: Vec<NaiveDate> = set.samples.iter().map(|s| s.date).collect();
    let index = TimeIndex::from_dates(dates).map_err(|_| {
        Error::Alignment("prophet base model requires gap-free samples".into())
    })?;
    let y: Vec<f64> = set.samples.iter().map(|s| s.target).collect();
    let mut p_config = config.prophet.clone();
    p_config.regressors = reg_names.clone();
    let params = prophet::fit(&y, &index, &regs(&set.samples), &p_config)?;

    let eval: Vec<&crate::ingest::Sample> = set
        .samples
        .iter()
        .filter(|s| s.date >= config.anchor && s.date <= config.horizon_end)
        .collect();
    if eval.is_empty() {
        return Err(Error::EmptyDataset(
            "no predictable dates inside the evaluation window".into(),
        ));
    }
    let eval_samples: Vec<crate::ingest::Sample> = eval.iter().map(|s| (*s).clone()).collect();
    let eval_dates: Vec<NaiveDate> = eval_samples.iter().map(|s| s.date).collect();
    let preds = prophet::predict(&params, &eval_dates, &regs(&eval_samples))?;
    Ok(eval_dates.into_iter().zip(preds).collect())
}

/// Exogenous covariate value for a rollout date under the configured policy.
fn exo_value(
    frame: &SeriesFrame,
    column: &str,
    date: NaiveDate,
    config: &InterventionConfig,
    last_pre_anchor: f64,
) -> f64 {
    let frozen = config.exo_policy == ExoPolicy::Frozen
        || config.freeze_columns.iter().any(|c| c == column);
    if frozen || date >= config.anchor {
        if frozen {
            return last_pre_anchor;
        }
    }
    // observed policy: actual value, holding the last known value across gaps
    match frame
        .index()
        .position(date)
        .and_then(|t| frame.column(column).ok().and_then(|c| c[t]))
    {
        Some(v) => v,
        None => last_pre_anchor,
    }
}

/// Recursive multi-step rollout of a trained forecaster from the anchor to
/// the horizon: predicted target values feed back into the target's own lag
/// features, exogenous covariates follow the policy.
pub fn recursive_rollout(
    frame: &SeriesFrame,
    sector: &str,
    feature_names: &[String],
    model: &dyn WindowForecaster,
    config: &InterventionConfig,
) -> Result<DatedSeries> {
    let index = frame.index();
    let target_col = frame.column(sector)?;
    let tau = config.tau;

    // Working copy of the target path: observed before the anchor, predicted
    // from it onward.
    let anchor_pos = index
        .position(config.anchor)
        .ok_or_else(|| Error::InvalidArgument("anchor outside frame".into()))?;
    let mut path: Vec<Option<f64>> = target_col.to_vec();

    // Last pre-anchor observation per column, for gap filling and freezing.
    let mut last_pre: BTreeMap<String, f64> = BTreeMap::new();
    for name in feature_names {
        let col = frame.column(name)?;
        let v = col[..anchor_pos]
            .iter()
            .rev()
            .flatten()
            .next()
            .copied()
            .ok_or_else(|| {
                Error::EmptyDataset(format!("no pre-anchor observations for {name}"))
            })?;
        last_pre.insert(name.clone(), v);
    }

    let end_pos = index
        .position(config.horizon_end)
        .unwrap_or(index.len() - 1);
    let mut out = Vec::new();
    for t in anchor_pos..=end_pos {
        if t < tau {
            continue;
        }
        let mut window = Vec::with_capacity(tau);
        for r in (t - tau)..t {
            let date = index.dates()[r];
            let mut row = Vec::with_capacity(feature_names.len());
            for name in feature_names {
                if name == sector {
                    let v = path[r].unwrap_or(last_pre[name]);
                    row.push(v);
                } else {
                    row.push(exo_value(frame, name, date, config, last_pre[name]));
                }
            }
            window.push(row);
        }
        let pred = model.predict(&window, feature_names)?;
        path[t] = Some(pred);
        out.push((index.dates()[t], pred));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset("empty rollout horizon".into()));
    }
    Ok(out)
}

/// Counterfactual forecast: train only on data strictly before the anchor,
/// without the shock dummy, then roll forward recursively.
pub fn counterfactual_forecast(
    frame: &SeriesFrame,
    sector: &str,
    config: &InterventionConfig,
) -> Result<DatedSeries> {
    config.validate(frame)?;
    let pre_span = (config.anchor - frame.index().first()).num_days();
    if pre_span < MIN_PRE_ANCHOR_DAYS {
        return Err(Error::EmptyDataset(format!(
            "only {pre_span} pre-anchor days; need {MIN_PRE_ANCHOR_DAYS}"
        )));
    }
    let pre_frame = frame.before(config.anchor)?;
    let set = make_windows(&pre_frame, sector, &config.controls, config.tau)?;
    // Structural no-leakage guarantee: every training target date is
    // pre-anchor because the frame itself was cut at the anchor.
    debug_assert!(set.samples.iter().all(|s| s.date < config.anchor));

    match config.base_model {
        BaseModel::Lstm => {
            let lstm_config = TrainConfig {
                seed: config.seed,
                ..config.lstm.clone()
            };
            let (model, _) = lstm::train(&set, &lstm_config)?;
            recursive_rollout(frame, sector, &set.feature_names, &model, config)
        }
        BaseModel::Prophet => {
            // No target-lag regressor here: the decomposable model forecasts
            // the horizon directly from trend, seasonality, and policy-fed
            // exogenous regressors, which is a natural multi-step form.
            let regs_for = |dates: &[NaiveDate], frame: &SeriesFrame| -> Result<BTreeMap<String, Vec<f64>>> {
                let mut out = BTreeMap::new();
                let mut last_pre: BTreeMap<String, f64> = BTreeMap::new();
                let anchor_pos = frame.index().position(config.anchor).unwrap();
                for name in &config.controls {
                    let col = frame.column(name)?;
                    let v = col[..anchor_pos].iter().rev().flatten().next().copied();
                    if let Some(v) = v {
                        last_pre.insert(name.clone(), v);
                    }
                }
                for name in &config.controls {
                    let fallback = last_pre.get(name).copied().unwrap_or(0.0);
                    out.insert(
                        name.clone(),
                        dates
                            .iter()
                            .map(|d| exo_value(frame, name, *d, config, fallback))
                            .collect(),
                    );
                }
                Ok(out)
            };
            let mut p_config = config.prophet.clone();
            p_config.regressors = config.controls.clone();
            let pre_dates = pre_frame.index().dates().to_vec();
            let y_opt = pre_frame.column(sector)?;
            // listwise-complete pre-anchor rows
            let mut fit_dates = Vec::new();
            let mut y = Vec::new();
            for (t, d) in pre_dates.iter().enumerate() {
                let Some(target) = y_opt[t] else { continue };
                let complete = config
                    .controls
                    .iter()
                    .all(|c| pre_frame.column(c).map(|col| col[t].is_some()).unwrap_or(false));
                if complete {
                    fit_dates.push(*d);
                    y.push(target);
                }
            }
            let index = TimeIndex::from_dates(fit_dates).map_err(|_| {
                Error::Alignment("prophet base model requires gap-free pre-anchor data".into())
            })?;
            let fit_regs = {
                let mut out = BTreeMap::new();
                for name in &config.controls {
                    let col = pre_frame.column(name)?;
                    let vals: Vec<f64> = pre_frame
                        .index()
                        .dates()
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| {
                            y_opt[*t].is_some()
                                && config.controls.iter().all(|c| {
                                    pre_frame
                                        .column(c)
                                        .map(|cc| cc[*t].is_some())
                                        .unwrap_or(false)
                                })
                        })
                        .map(|(t, _)| col[t].unwrap())
                        .collect();
                    out.insert(name.clone(), vals);
                }
                out
            };
            let params = prophet::fit(&y, &index, &fit_regs, &p_config)?;
            let horizon: Vec<NaiveDate> = frame
                .index()
                .dates()
                .iter()
                .filter(|d| **d >= config.anchor && **d <= config.horizon_end)
                .copied()
                .collect();
            let preds = prophet::predict(&params, &horizon, &regs_for(&horizon, frame)?)?;
            Ok(horizon.into_iter().zip(preds).collect())
        }
    }
}

/// One calendar month of the delta report. Deltas are forecast minus actual.
#[derive(Debug, Clone, Serialize)]
pub struct MonthRow {
    /// "YYYY-MM".
    pub month: String,
    pub actual: f64,
    pub forecast_war: f64,
    pub forecast_nowar: f64,
    pub delta_war: f64,
    pub delta_nowar: f64,
    /// None when the monthly actual mean is zero.
    pub delta_war_pct: Option<f64>,
    pub delta_nowar_pct: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterfactualReport {
    pub sector: String,
    pub rows: Vec<MonthRow>,
    /// Months dropped for having fewer than the required shared days, with
    /// their day counts.
    pub omitted_months: Vec<(String, usize)>,
}

/// Aggregate the three series to calendar months and compute deltas.
///
/// Only dates present in all three series count; months with fewer than
/// [`MIN_DAYS_PER_MONTH`] shared days are omitted and listed.
pub fn monthly_deltas(
    sector: &str,
    actual: &DatedSeries,
    factual: &DatedSeries,
    counterfactual: &DatedSeries,
) -> Result<CounterfactualReport> {
    let f_map: BTreeMap<NaiveDate, f64> = factual.iter().copied().collect();
    let c_map: BTreeMap<NaiveDate, f64> = counterfactual.iter().copied().collect();

    let mut months: BTreeMap<(i32, u32), Vec<(f64, f64, f64)>> = BTreeMap::new();
    for (date, a) in actual {
        let (Some(f), Some(c)) = (f_map.get(date), c_map.get(date)) else {
            continue;
        };
        months
            .entry((date.year(), date.month()))
            .or_default()
            .push((*a, *f, *c));
    }
    if months.is_empty() {
        return Err(Error::Alignment(
            "actual, factual, and counterfactual series share no dates".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for ((year, month), triples) in months {
        let label = format!("{year:04}-{month:02}");
        if triples.len() < MIN_DAYS_PER_MONTH {
            omitted.push((label, triples.len()));
            continue;
        }
        let n = triples.len() as f64;
        let actual_mean = triples.iter().map(|t| t.0).sum::<f64>() / n;
        let factual_mean = triples.iter().map(|t| t.1).sum::<f64>() / n;
        let cf_mean = triples.iter().map(|t| t.2).sum::<f64>() / n;
        let delta_war = factual_mean - actual_mean;
        let delta_nowar = cf_mean - actual_mean;
        let pct = |delta: f64| {
            if actual_mean == 0.0 {
                None
            } else {
                Some(100.0 * delta / actual_mean)
            }
        };
        rows.push(MonthRow {
            month: label,
            actual: actual_mean,
            forecast_war: factual_mean,
            forecast_nowar: cf_mean,
            delta_war,
            delta_nowar,
            delta_war_pct: pct(delta_war),
            delta_nowar_pct: pct(delta_nowar),
        });
    }
    Ok(CounterfactualReport {
        sector: sector.to_string(),
        rows,
        omitted_months: omitted,
    })
}
