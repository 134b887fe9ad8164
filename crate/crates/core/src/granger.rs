//! Nonlinear Granger-causality testing.
//!
//! For each (candidate -> target) edge, a restricted forecaster (target lags
//! plus controls) and an augmented forecaster (same plus the candidate's
//! lags) are trained with identical seed and chronological splits. Held-out
//! absolute one-step errors are compared with a one-sided Wilcoxon
//! signed-rank test: small p means the candidate's lags improved prediction.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::ingest::{make_windows, SupervisedSet};
use crate::lstm::{self, TrainConfig};
use crate::prophet::{self, ProphetConfig};
use crate::timeseries::{SeriesFrame, TimeIndex};

/// Direction of the one-sided alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// a tends below b.
    Less,
    /// a tends above b.
    Greater,
}

/// Outcome of a signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences (midranks under ties).
    pub w: f64,
    pub p: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n: usize,
    /// True when every difference was zero (p is reported as 1).
    pub degenerate: bool,
    /// True when the exact null distribution was used (n <= 25).
    pub exact: bool,
}

/// Largest n for which the exact null distribution is enumerated.
pub const EXACT_LIMIT: usize = 25;

/// Paired one-sided Wilcoxon signed-rank test.
///
/// Zero differences are dropped; ties in |d| get midranks. For n <= 25 the
/// p-value is exact over all 2^n sign assignments (computed by counting, so
/// it matches brute-force enumeration bit for bit); beyond that a normal
/// approximation with tie-corrected variance and continuity correction is
/// used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(WilcoxonResult {
            w: 0.0,
            p: 1.0,
            n: 0,
            degenerate: true,
            exact: true,
        });
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::SampleTooSmall { need: 5, got: n });
    }

    // Midranks of |d|, doubled so ties stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut rank2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let count = j - i + 1;
        tie_sizes.push(count);
        let each2 = ((i + 1 + j + 1) * count) as u64 / count as u64;
        for &idx in &order[i..=j] {
            rank2[idx] = each2;
        }
        i = j + 1;
    }
    let w2_obs: u64 = diffs
        .iter()
        .zip(&rank2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let w = w2_obs as f64 / 2.0;

    let p = if n <= EXACT_LIMIT {
        exact_p(&rank2, w2_obs, alternative)
    } else {
        normal_p(n, &tie_sizes, w, alternative)
    };
    Ok(WilcoxonResult {
        w,
        p,
        n,
        degenerate: false,
        exact: n <= EXACT_LIMIT,
    })
}

/// Count sign patterns by dynamic programming over achievable doubled rank
/// sums; equivalent to enumerating all 2^n assignments.
fn exact_p(rank2: &[u64], w2_obs: u64, alternative: Alternative) -> f64 {
    let total: u64 = rank2.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in rank2 {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| match alternative {
            Alternative::Less => *s as u64 <= w2_obs,
            Alternative::Greater => *s as u64 >= w2_obs,
        })
        .map(|(_, c)| *c)
        .sum();
    hits as f64 / 2f64.powi(rank2.len() as i32)
}

fn normal_p(n: usize, tie_sizes: &[usize], w: f64, alternative: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_correction: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            (t * t * t - t) / 48.0
        })
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction;
    let sd = var.sqrt();
    match alternative {
        Alternative::Less => std_normal_cdf((w + 0.5 - mean) / sd),
        Alternative::Greater => std_normal_cdf((mean - w + 0.5) / sd),
    }
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (absolute error below 1.5e-7).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Which forecaster backs the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseModel {
    Lstm,
    Prophet,
}

impl std::fmt::Display for BaseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaseModel::Lstm => write!(f, "lstm"),
            BaseModel::Prophet => write!(f, "prophet"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrangerConfig {
    pub base_model: BaseModel,
    pub tau: usize,
    /// Final fraction of aligned samples held out for the paired comparison.
    pub test_fraction: f64,
    pub seed: u64,
    /// Extra seeds for median-p robustness runs (empty = single run).
    #[serde(default)]
    pub extra_seeds: Vec<u64>,
    pub lstm: TrainConfig,
    pub prophet: ProphetConfig,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self {
            base_model: BaseModel::Lstm,
            tau: 7,
            test_fraction: 0.2,
            seed: 42,
            extra_seeds: Vec::new(),
            lstm: TrainConfig::default(),
            prophet: ProphetConfig::default(),
        }
    }
}

impl GrangerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction <= 0.5) {
            return Err(Error::InvalidArgument(
                "test fraction must be in (0, 0.5]".into(),
            ));
        }
        if self.tau < 1 {
            return Err(Error::InvalidArgument("tau must be >= 1".into()));
        }
        Ok(())
    }
}

/// Paired-error statistics for one (candidate -> target) edge.
#[derive(Debug, Clone, Serialize)]
pub struct GrangerResult {
    pub target: String,
    pub candidate: String,
    pub base_model: BaseModel,
    pub n_pairs: usize,
    pub w: f64,
    pub p_value: f64,
    pub mae_restricted: f64,
    pub mae_augmented: f64,
    pub seed: u64,
}

fn chronological_split(n: usize, test_fraction: f64) -> (usize, usize) {
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    (n - n_test, n_test)
}

/// One-step absolute errors of the configured base model on the held-out
/// tail of the set.
fn holdout_abs_errors(
    set: &SupervisedSet,
    config: &GrangerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let (train_end, _) = chronological_split(set.len(), config.test_fraction);
    match config.base_model {
        BaseModel::Lstm => {
            let train_set = SupervisedSet {
                samples: set.samples[..train_end].to_vec(),
                feature_names: set.feature_names.clone(),
                tau: set.tau,
                target_name: set.target_name.clone(),
            };
            let lstm_config = TrainConfig {
                seed,
                ..config.lstm.clone()
            };
            let (model, _) = lstm::train(&train_set, &lstm_config)?;
            set.samples[train_end..]
                .iter()
                .map(|s| {
                    let pred = model.predict_one(&s.window, &set.feature_names)?;
                    Ok((pred - s.target).abs())
                })
                .collect()
        }
        BaseModel::Prophet => {
            // Lagged inputs enter as regressors: each feature's value at t-1
            // (the last window row), including the target's own lag.
            let reg_names: Vec<String> = set
                .feature_names
                .iter()
                .map(|n| format!("{n}@t-1"))
                .collect();
            let collect_regs = |samples: &[crate::ingest::Sample]| {
                let mut regs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for (j, name) in reg_names.iter().enumerate() {
                    regs.insert(
                        name.clone(),
                        samples.iter().map(|s| s.window[set.tau - 1][j]).collect(),
                    );
                }
                regs
            };
            // Prophet needs a contiguous index; fitting on sample dates works
            // only when the training samples are contiguous, so fall back to
            // per-date design evaluation which has no contiguity need.
            let train_dates: Vec<chrono::NaiveDate> =
                set.samples[..train_end].iter().map(|s| s.date).collect();
            let y: Vec<f64> = set.samples[..train_end].iter().map(|s| s.target).collect();
            let index = contiguous_or_error(&train_dates)?;
            let mut p_config = config.prophet.clone();
            p_config.regressors = reg_names.clone();
            let params = prophet::fit(&y, &index, &collect_regs(&set.samples[..train_end]), &p_config)?;

            let test = &set.samples[train_end..];
            let test_dates: Vec<chrono::NaiveDate> = test.iter().map(|s| s.date).collect();
            let preds = prophet::predict(&params, &test_dates, &collect_regs(test))?;
            Ok(test
                .iter()
                .zip(preds)
                .map(|(s, p)| (p - s.target).abs())
                .collect())
        }
    }
}

fn contiguous_or_error(dates: &[chrono::NaiveDate]) -> Result<TimeIndex> {
    TimeIndex::from_dates(dates.to_vec()).map_err(|_| {
        Error::Alignment(
            "prophet base model requires a contiguous training segment (missing-value gaps present)"
                .into(),
        )
    })
}

/// Run the restricted-vs-augmented comparison for one edge.
///
/// `controls` are the target's selected factors; the candidate is removed
/// from them if present. Both supervised sets are restricted to the dates
/// where the augmented set is complete, so the paired errors cover identical
/// dates by construction.
pub fn granger_test(
    frame: &SeriesFrame,
    target: &str,
    candidate: &str,
    controls: &[String],
    config: &GrangerConfig,
) -> Result<GrangerResult> {
    config.validate()?;
    let controls: Vec<String> = controls
        .iter()
        .filter(|c| c.as_str() != candidate && c.as_str() != target)
        .cloned()
        .collect();
    let mut augmented_features = controls.clone();
    augmented_features.push(candidate.to_string());

    let restricted = make_windows(frame, target, &controls, config.tau)?;
    let augmented = make_windows(frame, target, &augmented_features, config.tau)?;

    let aug_dates: BTreeSet<chrono::NaiveDate> = augmented.dates().into_iter().collect();
    let restricted = restricted.restrict_to_dates(&aug_dates);
    if restricted.dates() != augmented.dates() {
        let missing: Vec<String> = aug_dates
            .iter()
            .filter(|d| !restricted.dates().contains(d))
            .map(|d| d.to_string())
            .collect();
        return Err(Error::Alignment(format!(
            "restricted/augmented sample dates diverge at: {}",
            missing.join(", ")
        )));
    }

    let run = |seed: u64| -> Result<(f64, WilcoxonResult, f64, f64, usize)> {
        let err_restricted = holdout_abs_errors(&restricted, config, seed)?;
        let err_augmented = holdout_abs_errors(&augmented, config, seed)?;
        let n_pairs = err_restricted.len();
        let wres = wilcoxon_signed_rank(&err_augmented, &err_restricted, Alternative::Less)?;
        let mae = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok((wres.p, wres, mae(&err_restricted), mae(&err_augmented), n_pairs))
    };

    if config.extra_seeds.is_empty() {
        let (_, wres, mae_r, mae_a, n_pairs) = run(config.seed)?;
        Ok(GrangerResult {
            target: target.to_string(),
            candidate: candidate.to_string(),
            base_model: config.base_model,
            n_pairs,
            w: wres.w,
            p_value: wres.p,
            mae_restricted: mae_r,
            mae_augmented: mae_a,
            seed: config.seed,
        })
    } else {
        // Median p over all seeds; the first seed's W/MAE are reported.
        let mut seeds = vec![config.seed];
        seeds.extend(&config.extra_seeds);
        let mut ps = Vec::with_capacity(seeds.len());
        let mut first = None;
        for &s in &seeds {
            let out = run(s)?;
            ps.push(out.0);
            if first.is_none() {
                first = Some(out);
            }
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if ps.len() % 2 == 1 {
            ps[ps.len() / 2]
        } else {
            0.5 * (ps[ps.len() / 2 - 1] + ps[ps.len() / 2])
        };
        let (_, wres, mae_r, mae_a, n_pairs) = first.unwrap();
        Ok(GrangerResult {
            target: target.to_string(),
            candidate: candidate.to_string(),
            base_model: config.base_model,
            n_pairs,
            w: wres.w,
            p_value: median,
            mae_restricted: mae_r,
            mae_augmented: mae_a,
            seed: config.seed,
        })
    }
}

/// One matrix cell: a result or a recorded failure.
#[derive(Debug, Clone)]
pub enum GrangerCell {
    Ok(GrangerResult),
    Failed {
        target: String,
        candidate: String,
        reason: String,
    },
}

/// Run every (target, candidate) edge; cells fail independently. Output is
/// target-major with candidates in lexicographic order.
pub fn granger_matrix(
    frame: &SeriesFrame,
    controls_per_target: &BTreeMap<String, Vec<String>>,
    candidates: &[String],
    config: &GrangerConfig,
) -> Vec<GrangerCell> {
    let mut cells = Vec::new();
    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort();
    for (target, controls) in controls_per_target {
        for candidate in &sorted_candidates {
            match granger_test(frame, target, candidate, controls, config) {
                Ok(res) => cells.push(GrangerCell::Ok(res)),
                Err(e) => cells.push(GrangerCell::Failed {
                    target: target.clone(),
                    candidate: candidate.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    cells
}
