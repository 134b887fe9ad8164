//! Kraskov-Stogbauer-Grassberger (KSG) k-nearest-neighbor mutual information
//! and the per-sector factor-selection rule.
//!
//! The first KSG estimator with max-norm neighborhoods:
//!
//!   I(X;Y) = psi(k) + psi(N) - < psi(n_x + 1) + psi(n_y + 1) >
//!
//! where n_x, n_y count marginal neighbors strictly inside the k-th neighbor
//! distance. Discrete-ish marginals (dummies, workday flags) break the
//! continuous-marginal assumption, so a tiny deterministic jitter is added
//! before estimation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::timeseries::SeriesFrame;

/// Jitter amplitude relative to the column standard deviation.
const JITTER_REL_AMPLITUDE: f64 = 1e-10;

/// One estimated cell of the MI matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MiScore {
    pub target: String,
    pub factor: String,
    /// Raw KSG estimate in nats; may be slightly negative.
    pub value: f64,
    pub n: usize,
    pub k: usize,
}

impl MiScore {
    /// Value clamped at zero, as used for selection arithmetic.
    pub fn clamped(&self) -> f64 {
        self.value.max(0.0)
    }
}

/// Digamma function, accurate to about 1e-10 for x > 0.
///
/// Uses the recurrence psi(x) = psi(x+1) - 1/x to shift the argument to
/// x >= 6, then the asymptotic series in inverse even powers.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("digamma needs x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number series: ln x - 1/2x - 1/12x^2 + 1/120x^4 - ...
    let series = x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 120.0
                        - inv2
                            * (1.0 / 252.0
                                - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    Ok(acc + series)
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// KSG mutual information estimate in nats.
///
/// Deterministic: the tie-breaking jitter is drawn from a stream seeded by
/// `jitter_seed`, and the two marginals are put in a canonical order first so
/// that `ksg_mi(x, y)` and `ksg_mi(y, x)` are bit-identical.
pub fn ksg_mi(pairs: &[(f64, f64)], k: usize, jitter_seed: u64) -> Result<f64> {
    let n = pairs.len();
    if k < 1 || n <= k {
        return Err(Error::InvalidArgument(format!(
            "need n > k >= 1, got n={n}, k={k}"
        )));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }

    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    if xs == ys {
        return Err(Error::DegenerateInput(
            "marginals are identical; all max-norm coordinates coincide".into(),
        ));
    }
    // Canonical marginal order so the jitter assignment is symmetric in x/y.
    if ys < xs {
        std::mem::swap(&mut xs, &mut ys);
    }

    let sd_x = sample_sd(&xs);
    let sd_y = sample_sd(&ys);
    if sd_x == 0.0 || sd_y == 0.0 {
        return Err(Error::DegenerateInput("zero-variance marginal".into()));
    }

    let mut rng = Xoshiro256::for_stage(jitter_seed, "ksg-jitter");
    let ax = JITTER_REL_AMPLITUDE * sd_x;
    let ay = JITTER_REL_AMPLITUDE * sd_y;
    for x in xs.iter_mut() {
        *x += rng.uniform(-ax, ax);
    }
    for y in ys.iter_mut() {
        *y += rng.uniform(-ay, ay);
    }

    let mut psi_sum = 0.0;
    let mut dist = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            dist[j] = (xs[j] - xs[i]).abs().max((ys[j] - ys[i]).abs());
        }
        dist[i] = f64::INFINITY; // exclude self
        let eps = kth_smallest(&mut dist.clone(), k);
        if eps == 0.0 {
            return Err(Error::DegenerateInput(
                "zero k-th neighbor distance after jitter".into(),
            ));
        }
        let mut n_x = 0usize;
        let mut n_y = 0usize;
        for j in 0..n {
            if j == i {
                continue;
            }
            if (xs[j] - xs[i]).abs() < eps {
                n_x += 1;
            }
            if (ys[j] - ys[i]).abs() < eps {
                n_y += 1;
            }
        }
        psi_sum += digamma((n_x + 1) as f64)? + digamma((n_y + 1) as f64)?;
    }

    Ok(digamma(k as f64)? + digamma(n as f64)? - psi_sum / n as f64)
}

fn kth_smallest(xs: &mut [f64], k: usize) -> f64 {
    // k is 1-based
    let (_, v, _) = xs.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    *v
}

/// MI matrix over (target, factor) cells; failed cells are recorded, not fatal.
#[derive(Debug, Clone)]
pub struct MiTable {
    pub scores: Vec<MiScore>,
    pub failures: Vec<(String, String, String)>,
}

/// Minimum listwise-complete pairs for one MI cell.
pub const MIN_PAIRS: usize = 100;

pub fn mi_matrix(
    frame: &SeriesFrame,
    targets: &[String],
    factors: &[String],
    k: usize,
    jitter_seed: u64,
) -> Result<MiTable> {
    let mut table = MiTable {
        scores: Vec::new(),
        failures: Vec::new(),
    };
    for target in targets {
        let ty = frame.column(target)?;
        for factor in factors {
            if factor == target {
                table.failures.push((
                    target.clone(),
                    factor.clone(),
                    "factor equals target".into(),
                ));
                continue;
            }
            let fx = frame.column(factor)?;
            let pairs: Vec<(f64, f64)> = fx
                .iter()
                .zip(ty.iter())
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .collect();
            if pairs.len() < MIN_PAIRS {
                table.failures.push((
                    target.clone(),
                    factor.clone(),
                    format!("only {} complete pairs (need {MIN_PAIRS})", pairs.len()),
                ));
                continue;
            }
            match ksg_mi(&pairs, k, jitter_seed) {
                Ok(value) => table.scores.push(MiScore {
                    target: target.clone(),
                    factor: factor.clone(),
                    value,
                    n: pairs.len(),
                    k,
                }),
                Err(e) => table
                    .failures
                    .push((target.clone(), factor.clone(), e.to_string())),
            }
        }
    }
    Ok(table)
}

/// How the selection quantile is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Smallest top-ranked prefix capturing at least the requested share of
    /// total clamped MI mass (the default reading).
    CumulativeShare,
    /// Keep factors whose clamped score is at or above the requested
    /// percentile of the clamped score distribution.
    ScorePercentile,
}

/// Outcome of factor selection for one target.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub target: String,
    /// All scores, ranked descending (ties broken by factor name).
    pub ranked: Vec<MiScore>,
    pub selected: Vec<String>,
    pub coverage: f64,
    /// Set when every score was <= 0 and selection fell back to `forced`.
    pub degenerate: bool,
}

pub fn select_factors(
    scores: &[MiScore],
    quantile: f64,
    forced: &[String],
    rule: SelectionRule,
) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to select from".into()));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must be in (0, 1], got {quantile}"
        )));
    }
    let target = scores[0].target.clone();
    if scores.iter().any(|s| s.target != target) {
        return Err(Error::InvalidArgument(
            "select_factors expects scores for a single target".into(),
        ));
    }

    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| {
        b.clamped()
            .partial_cmp(&a.clamped())
            .unwrap()
            .then_with(|| a.factor.cmp(&b.factor))
    });

    let total: f64 = ranked.iter().map(|s| s.clamped()).sum();
    if total <= 0.0 {
        return Ok(SelectionResult {
            target,
            ranked,
            selected: forced.to_vec(),
            coverage: 0.0,
            degenerate: true,
        });
    }

    let mut selected: Vec<String> = Vec::new();
    match rule {
        SelectionRule::CumulativeShare => {
            let mut acc = 0.0;
            for s in &ranked {
                selected.push(s.factor.clone());
                acc += s.clamped();
                if acc / total >= quantile {
                    break;
                }
            }
        }
        SelectionRule::ScorePercentile => {
            let mut vals: Vec<f64> = ranked.iter().map(|s| s.clamped()).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let threshold = percentile(&vals, quantile);
            for s in &ranked {
                if s.clamped() >= threshold {
                    selected.push(s.factor.clone());
                }
            }
        }
    }
    for f in forced {
        if !selected.contains(f) {
            selected.push(f.clone());
        }
    }
    let coverage: f64 = ranked
        .iter()
        .filter(|s| selected.contains(&s.factor))
        .map(|s| s.clamped())
        .sum::<f64>()
        / total;

    Ok(SelectionResult {
        target,
        ranked,
        selected,
        coverage,
        degenerate: false,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
