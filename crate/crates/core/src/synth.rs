//! Seeded synthetic generators with known ground truth, plus brute-force
//! oracles used to validate the estimators elsewhere in the crate.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256;
use crate::timeseries::{SeriesFrame, TimeIndex};

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Bivariate standard Gaussian with correlation rho; columns "x", "y".
    GaussianPair { rho: f64 },
    /// AR(1) around `mean`: y_t = mean + phi (y_{t-1} - mean) + sigma e_t.
    Ar1 {
        phi: f64,
        sigma: f64,
        #[serde(default)]
        mean: f64,
    },
    /// x is AR(1) (same coefficient), y_t = phi_y y_{t-1} + c tanh(2 x_{t-lag}) + sigma e_t.
    TanhCoupled {
        phi_y: f64,
        coupling: f64,
        lag: usize,
        sigma: f64,
    },
    /// Base series with `effect` added to column "y" from `anchor_index` on.
    StepIntervention {
        base: Box<GeneratorKind>,
        anchor_index: usize,
        effect: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidArgument("generator needs n >= 10".into()));
        }
        validate_kind(&self.kind, self.n)
    }
}

fn validate_kind(kind: &GeneratorKind, n: usize) -> Result<()> {
    match kind {
        GeneratorKind::GaussianPair { rho } => {
            if rho.abs() >= 1.0 {
                return Err(Error::InvalidArgument(format!("|rho| must be < 1, got {rho}")));
            }
        }
        GeneratorKind::Ar1 { phi, sigma, .. } => {
            if phi.abs() >= 1.0 {
                return Err(Error::InvalidArgument(format!("|phi| must be < 1, got {phi}")));
            }
            if *sigma <= 0.0 {
                return Err(Error::InvalidArgument("sigma must be > 0".into()));
            }
        }
        GeneratorKind::TanhCoupled { phi_y, lag, sigma, .. } => {
            if phi_y.abs() >= 1.0 {
                return Err(Error::InvalidArgument(format!("|phi_y| must be < 1, got {phi_y}")));
            }
            if *sigma <= 0.0 {
                return Err(Error::InvalidArgument("sigma must be > 0".into()));
            }
            if *lag < 1 || *lag >= n {
                return Err(Error::InvalidArgument("lag must be in [1, n)".into()));
            }
        }
        GeneratorKind::StepIntervention { base, anchor_index, .. } => {
            validate_kind(base, n)?;
            if *anchor_index >= n {
                return Err(Error::InvalidArgument("anchor index out of range".into()));
            }
        }
    }
    Ok(())
}

/// Generated frame plus the spec that produced it (the ground truth).
#[derive(Debug, Clone)]
pub struct Generated {
    pub frame: SeriesFrame,
    pub spec: GeneratorSpec,
    pub start: NaiveDate,
}

impl Generated {
    /// Anchor date for step-intervention specs.
    pub fn anchor_date(&self) -> Option<NaiveDate> {
        match &self.spec.kind {
            GeneratorKind::StepIntervention { anchor_index, .. } => {
                Some(self.start + Days::new(*anchor_index as u64))
            }
            _ => None,
        }
    }
}

/// Deterministic generation: identical spec and start date always produce the
/// identical frame.
pub fn generate(spec: &GeneratorSpec, start: NaiveDate) -> Result<Generated> {
    spec.validate()?;
    let n = spec.n;
    let end = start + Days::new(n as u64 - 1);
    let index = TimeIndex::span(start, end)?;
    let mut frame = SeriesFrame::new(index);
    let mut rng = Xoshiro256::for_stage(spec.seed, "synth");
    fill(&mut frame, &spec.kind, n, &mut rng)?;
    Ok(Generated {
        frame,
        spec: spec.clone(),
        start,
    })
}

fn fill(frame: &mut SeriesFrame, kind: &GeneratorKind, n: usize, rng: &mut Xoshiro256) -> Result<()> {
    match kind {
        GeneratorKind::GaussianPair { rho } => {
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let z1 = rng.normal();
                let z2 = rng.normal();
                xs.push(Some(z1));
                ys.push(Some(rho * z1 + (1.0 - rho * rho).sqrt() * z2));
            }
            frame.insert_column("x", xs)?;
            frame.insert_column("y", ys)?;
        }
        GeneratorKind::Ar1 { phi, sigma, mean } => {
            frame.insert_column("y", ar1(n, *phi, *sigma, *mean, rng))?;
        }
        GeneratorKind::TanhCoupled {
            phi_y,
            coupling,
            lag,
            sigma,
        } => {
            let xs: Vec<Option<f64>> = ar1(n, *phi_y, *sigma, 0.0, rng);
            let mut ys = Vec::with_capacity(n);
            let mut y = 0.0;
            for t in 0..n {
                let drive = if t >= *lag {
                    coupling * (2.0 * xs[t - lag].unwrap()).tanh()
                } else {
                    0.0
                };
                y = phi_y * y + drive + sigma * rng.normal();
                ys.push(Some(y));
            }
            frame.insert_column("x", xs)?;
            frame.insert_column("y", ys)?;
        }
        GeneratorKind::StepIntervention {
            base,
            anchor_index,
            effect,
        } => {
            fill(frame, base, n, rng)?;
            let stepped: Vec<Option<f64>> = frame
                .column("y")?
                .iter()
                .enumerate()
                .map(|(t, v)| v.map(|x| if t >= *anchor_index { x + effect } else { x }))
                .collect();
            let mut out = SeriesFrame::new(frame.index().clone());
            for name in frame.column_names().to_vec() {
                if name == "y" {
                    out.insert_column("y", stepped.clone())?;
                } else {
                    out.insert_column(&name, frame.column(&name)?.to_vec())?;
                }
            }
            *frame = out;
        }
    }
    Ok(())
}

fn ar1(n: usize, phi: f64, sigma: f64, mean: f64, rng: &mut Xoshiro256) -> Vec<Option<f64>> {
    // Stationary start draw keeps early samples on-distribution.
    let stat_sd = sigma / (1.0 - phi * phi).sqrt();
    let mut y = mean + stat_sd * rng.normal();
    let mut out = Vec::with_capacity(n);
    out.push(Some(y));
    for _ in 1..n {
        y = mean + phi * (y - mean) + sigma * rng.normal();
        out.push(Some(y));
    }
    out
}

/// Closed-form mutual information of a bivariate Gaussian, in nats.
pub fn analytic_mi_gaussian(rho: f64) -> Result<f64> {
    if rho.abs() >= 1.0 {
        return Err(Error::InvalidArgument(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// Tail direction for the signed-rank tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// a tends below b.
    Less,
    /// a tends above b.
    Greater,
}

/// Exact signed-rank p-value by full enumeration over all 2^n sign patterns.
/// Deliberately brute force; used only as a cross-check oracle.
pub fn brute_wilcoxon(a: &[f64], b: &[f64], tail: Tail) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(1.0);
    }
    if n > 15 {
        return Err(Error::InvalidArgument(format!(
            "brute enumeration limited to n <= 15, got {n}"
        )));
    }
    // Midranks of |d|, doubled so ties stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut rank2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let sum2: u64 = ((i + 1 + j + 1) * (j - i + 1)) as u64; // 2 * average rank * count
        let each = sum2 / (j - i + 1) as u64;
        for &idx in &order[i..=j] {
            rank2[idx] = each;
        }
        i = j + 1;
    }
    let w_obs: u64 = diffs
        .iter()
        .zip(&rank2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let mut count = 0u64;
    for mask in 0u64..(1u64 << n) {
        let mut w = 0u64;
        for (bit, r) in rank2.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                w += r;
            }
        }
        let hit = match tail {
            Tail::Less => w <= w_obs,
            Tail::Greater => w >= w_obs,
        };
        if hit {
            count += 1;
        }
    }
    Ok(count as f64 / (1u64 << n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn spec(kind: GeneratorKind, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec { kind, n, seed }
    }

    #[test]
    fn gaussian_pair_independent() {
        let g = generate(
            &spec(GeneratorKind::GaussianPair { rho: 0.0 }, 5000, 1),
            d("2015-01-01"),
        )
        .unwrap();
        let xs: Vec<f64> = g.frame.column("x").unwrap().iter().flatten().copied().collect();
        let ys: Vec<f64> = g.frame.column("y").unwrap().iter().flatten().copied().collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sx * sy)).abs() < 0.05);
    }

    #[test]
    fn ar1_autocorrelation() {
        let g = generate(
            &spec(
                GeneratorKind::Ar1 {
                    phi: 0.9,
                    sigma: 1.0,
                    mean: 0.0,
                },
                5000,
                2,
            ),
            d("2015-01-01"),
        )
        .unwrap();
        let ys: Vec<f64> = g.frame.column("y").unwrap().iter().flatten().copied().collect();
        let n = ys.len();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let cov1: f64 = ys
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let rho1 = cov1 / var;
        assert!((rho1 - 0.9).abs() < 0.03, "rho1={rho1}");
    }

    #[test]
    fn step_intervention_shifts_mean() {
        let g = generate(
            &spec(
                GeneratorKind::StepIntervention {
                    base: Box::new(GeneratorKind::Ar1 {
                        phi: 0.5,
                        sigma: 1.0,
                        mean: 0.0,
                    }),
                    anchor_index: 1000,
                    effect: 10.0,
                },
                2000,
                3,
            ),
            d("2015-01-01"),
        )
        .unwrap();
        let ys: Vec<f64> = g.frame.column("y").unwrap().iter().flatten().copied().collect();
        let pre = ys[..1000].iter().sum::<f64>() / 1000.0;
        let post = ys[1000..].iter().sum::<f64>() / 1000.0;
        assert!((post - pre - 10.0).abs() < 1.0, "shift={}", post - pre);
        assert_eq!(g.anchor_date(), Some(d("2015-01-01") + Days::new(1000)));
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(
            GeneratorKind::TanhCoupled {
                phi_y: 0.6,
                coupling: 1.0,
                lag: 2,
                sigma: 0.1,
            },
            200,
            7,
        );
        let a = generate(&s, d("2015-01-01")).unwrap();
        let b = generate(&s, d("2015-01-01")).unwrap();
        assert_eq!(a.frame.column("y").unwrap(), b.frame.column("y").unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(
            &spec(GeneratorKind::GaussianPair { rho: 1.0 }, 100, 1),
            d("2015-01-01")
        )
        .is_err());
        assert!(generate(
            &spec(
                GeneratorKind::Ar1 {
                    phi: 0.5,
                    sigma: 0.0,
                    mean: 0.0
                },
                100,
                1
            ),
            d("2015-01-01")
        )
        .is_err());
        assert!(generate(
            &spec(GeneratorKind::GaussianPair { rho: 0.0 }, 5, 1),
            d("2015-01-01")
        )
        .is_err());
    }

    #[test]
    fn analytic_mi_values() {
        assert_eq!(analytic_mi_gaussian(0.0).unwrap(), 0.0);
        assert!((analytic_mi_gaussian(0.9).unwrap() - 0.8303734).abs() < 1e-5);
        assert_eq!(
            analytic_mi_gaussian(0.9).unwrap(),
            analytic_mi_gaussian(-0.9).unwrap()
        );
        assert!(analytic_mi_gaussian(1.0).is_err());
    }

    #[test]
    fn brute_all_negative_n5() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![2.0, 3.0, 4.0, 5.0, 6.0];
        let p = brute_wilcoxon(&a, &b, Tail::Less).unwrap();
        assert_eq!(p, 1.0 / 32.0);
    }

    #[test]
    fn brute_single_diff() {
        let p = brute_wilcoxon(&[1.0], &[2.0], Tail::Less).unwrap();
        assert_eq!(p, 0.5);
        let p = brute_wilcoxon(&[2.0], &[1.0], Tail::Less).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn brute_refuses_large_n() {
        let a: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..16).map(|i| i as f64 + 1.0).collect();
        assert!(brute_wilcoxon(&a, &b, Tail::Less).is_err());
    }
}
