//! Daily time-series data model and deterministic feature transforms.

use chrono::{Datelike, Days, NaiveDate};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Strictly increasing, contiguous run of calendar dates at daily resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeIndex {
    dates: Vec<NaiveDate>,
}

impl TimeIndex {
    /// Build a contiguous index spanning [start, end] inclusive.
    pub fn span(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!(
                "end date {end} before start date {start}"
            )));
        }
        let mut dates = Vec::new();
        let mut d = start;
        while d <= end {
            dates.push(d);
            d = d.checked_add_days(Days::new(1)).expect("date overflow");
        }
        Ok(Self { dates })
    }

    /// Build from explicit dates; must already be strictly increasing and
    /// contiguous.
    pub fn from_dates(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::InvalidArgument("empty time index".into()));
        }
        for w in dates.windows(2) {
            if w[1] != w[0].checked_add_days(Days::new(1)).unwrap() {
                return Err(Error::InvalidArgument(format!(
                    "dates not contiguous at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { dates })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn first(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last(&self) -> NaiveDate {
        *self.dates.last().unwrap()
    }

    /// Position of a date, if within the index.
    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        if date < self.first() || date > self.last() {
            return None;
        }
        Some((date - self.first()).num_days() as usize)
    }
}

/// Aligned daily multivariate series with named columns. Missing values are
/// explicit `None` entries, never silently zero-filled. Immutable in spirit:
/// transforms return new frames or columns.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    index: TimeIndex,
    columns: BTreeMap<String, Vec<Option<f64>>>,
    order: Vec<String>,
}

impl SeriesFrame {
    pub fn new(index: TimeIndex) -> Self {
        Self {
            index,
            columns: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    pub fn index(&self) -> &TimeIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Column names in insertion order.
    pub fn column_names(&self) -> &[String] {
        &self.order
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Schema(format!("column {name} not found")))
    }

    pub fn insert_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if name.is_empty() {
            return Err(Error::InvalidArgument("empty column name".into()));
        }
        if self.columns.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "column {name} already exists"
            )));
        }
        if values.len() != self.index.len() {
            return Err(Error::InvalidArgument(format!(
                "column {name} has {} values for index of length {}",
                values.len(),
                self.index.len()
            )));
        }
        self.columns.insert(name.to_string(), values);
        self.order.push(name.to_string());
        Ok(())
    }

    /// Frame restricted to dates strictly before `cutoff`.
    pub fn before(&self, cutoff: NaiveDate) -> Result<SeriesFrame> {
        let n = self
            .index
            .dates()
            .iter()
            .take_while(|d| **d < cutoff)
            .count();
        if n == 0 {
            return Err(Error::EmptyDataset(format!("no rows before {cutoff}")));
        }
        let index = TimeIndex::from_dates(self.index.dates()[..n].to_vec())?;
        let mut out = SeriesFrame::new(index);
        for name in &self.order {
            out.insert_column(name, self.columns[name][..n].to_vec())?;
        }
        Ok(out)
    }
}

/// Derived-column recipe applied by `ingest::build_features`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// Shift a column back by `k` days; output named `"<source>-<k>"`.
    Lag { source: String, k: usize },
    /// sin/cos month-of-year pair; outputs `"<name>_sin"` / `"<name>_cos"`.
    CyclicalMonth { name: String },
    /// 1 on Monday..Friday, 0 otherwise.
    WorkdayFlag { name: String },
    /// 0 before `anchor`, 1 from `anchor` onward.
    WarDummy { name: String, anchor: NaiveDate },
    /// max(0, base - mean temperature) from a temperature column.
    HddFromTemperature {
        source: String,
        name: String,
        base: f64,
    },
}

/// Default base temperature for heating degree days, in degrees Celsius.
pub const DEFAULT_HDD_BASE: f64 = 15.5;

/// Shift a column back by `k` days; the first `k` entries become missing.
pub fn lag(column: &[Option<f64>], k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("lag k must be >= 1".into()));
    }
    if k >= column.len() {
        return Err(Error::InvalidArgument(format!(
            "lag k={k} >= column length {}",
            column.len()
        )));
    }
    let mut out = vec![None; column.len()];
    for t in k..column.len() {
        out[t] = column[t - k];
    }
    Ok(out)
}

/// 0 before the anchor date, 1 from the anchor onward.
pub fn war_dummy(date: NaiveDate, anchor: NaiveDate) -> f64 {
    if date >= anchor {
        1.0
    } else {
        0.0
    }
}

/// Month-of-year on the unit circle: (sin, cos) of 2π(m-1)/12.
pub fn cyclical_month(date: NaiveDate) -> (f64, f64) {
    let m = date.month() as f64;
    let angle = 2.0 * std::f64::consts::PI * (m - 1.0) / 12.0;
    (angle.sin(), angle.cos())
}

/// Heating degree days: max(0, base - mean temperature).
pub fn hdd_from_temperature(mean_temp: f64, base: f64) -> f64 {
    (base - mean_temp).max(0.0)
}

/// Workday indicator: 1 for Monday..Friday.
pub fn workday_flag(date: NaiveDate) -> f64 {
    match date.weekday().num_days_from_monday() {
        0..=4 => 1.0,
        _ => 0.0,
    }
}

/// Mean/standard-deviation pair enabling exact inverse transforms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    /// Fit on the non-missing entries of a column.
    pub fn fit(column: &[Option<f64>]) -> Result<Self> {
        let obs: Vec<f64> = column.iter().flatten().copied().collect();
        if obs.len() < 2 {
            return Err(Error::DegenerateColumn(format!(
                "need >= 2 observed values, got {}",
                obs.len()
            )));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
        if var <= 0.0 {
            return Err(Error::DegenerateColumn(format!(
                "zero variance (mean {mean})"
            )));
        }
        Ok(Self {
            mean,
            sd: var.sqrt(),
        })
    }

    /// Like [`fit`](Self::fit) but a constant column centers at its value
    /// with unit scale instead of failing. Suited to feature columns such as
    /// a shock dummy that is constant over a training split.
    pub fn fit_lenient(column: &[Option<f64>]) -> Result<Self> {
        match Self::fit(column) {
            Err(Error::DegenerateColumn(msg)) if msg.starts_with("zero variance") => {
                let first = column.iter().flatten().next().copied().unwrap_or(0.0);
                Ok(Self { mean: first, sd: 1.0 })
            }
            other => other,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Standardize a column; returns the transformed column and the fitted stats.
pub fn standardize(column: &[Option<f64>]) -> Result<(Vec<Option<f64>>, Standardizer)> {
    let stats = Standardizer::fit(column)?;
    let out = column.iter().map(|v| v.map(|x| stats.apply(x))).collect();
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn col(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().map(|x| Some(*x)).collect()
    }

    #[test]
    fn lag_shifts() {
        let out = lag(&col(&[1.0, 2.0, 3.0, 4.0]), 1).unwrap();
        assert_eq!(out, vec![None, Some(1.0), Some(2.0), Some(3.0)]);
        let out = lag(&col(&[5.0, 5.0, 5.0]), 2).unwrap();
        assert_eq!(out, vec![None, None, Some(5.0)]);
    }

    #[test]
    fn lag_rejects_bad_k() {
        assert!(lag(&col(&[1.0, 2.0]), 0).is_err());
        assert!(lag(&col(&[1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn lag_composes() {
        let x = col(&[1.0, 4.0, 9.0, 16.0, 25.0, 36.0]);
        let ab = lag(&lag(&x, 2).unwrap(), 1).unwrap();
        let direct = lag(&x, 3).unwrap();
        for t in 3..x.len() {
            assert_eq!(ab[t], direct[t]);
        }
    }

    #[test]
    fn war_dummy_anchor() {
        let anchor = d("2022-02-24");
        assert_eq!(war_dummy(d("2022-02-23"), anchor), 0.0);
        assert_eq!(war_dummy(d("2022-02-24"), anchor), 1.0);
        assert_eq!(war_dummy(d("2010-04-01"), anchor), 0.0);
    }

    #[test]
    fn war_dummy_monotone() {
        let anchor = d("2022-02-24");
        let mut prev = 0.0;
        let mut day = d("2022-02-01");
        for _ in 0..60 {
            let v = war_dummy(day, anchor);
            assert!(v >= prev);
            prev = v;
            day = day.succ_opt().unwrap();
        }
    }

    #[test]
    fn cyclical_month_cardinal_points() {
        let (s, c) = cyclical_month(d("2021-01-15"));
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        let (s, c) = cyclical_month(d("2021-04-15"));
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-12);
        let (s, c) = cyclical_month(d("2021-07-15"));
        assert!(s.abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cyclical_month_on_unit_circle() {
        let mut day = d("2020-01-01");
        for _ in 0..366 {
            let (s, c) = cyclical_month(day);
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
            day = day.succ_opt().unwrap();
        }
    }

    #[test]
    fn hdd_clamps() {
        assert_eq!(hdd_from_temperature(20.0, 15.5), 0.0);
        assert_eq!(hdd_from_temperature(10.0, 15.5), 5.5);
        assert_eq!(hdd_from_temperature(15.5, 15.5), 0.0);
    }

    #[test]
    fn standardize_three_points() {
        let (z, st) = standardize(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(st.mean, 2.0);
        assert_eq!(st.sd, 1.0);
        assert_eq!(z, vec![Some(-1.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn standardize_rejects_constant() {
        assert!(matches!(
            standardize(&col(&[4.0, 4.0, 4.0])),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn standardize_round_trip() {
        let xs = col(&[3.2, -1.5, 0.0, 12.7, 8.8, -4.4]);
        let (z, st) = standardize(&xs).unwrap();
        for (orig, zi) in xs.iter().zip(&z) {
            let back = st.invert(zi.unwrap());
            assert!((back - orig.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn standardize_unit_moments() {
        let xs = col(&[10.0, 20.0, 35.0, 5.0, 50.0, 42.0, 18.0]);
        let (z, _) = standardize(&xs).unwrap();
        let zs: Vec<f64> = z.iter().flatten().copied().collect();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (zs.len() - 1) as f64;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn frame_rejects_mismatched_column() {
        let idx = TimeIndex::span(d("2022-01-01"), d("2022-01-03")).unwrap();
        let mut frame = SeriesFrame::new(idx);
        assert!(frame.insert_column("x", vec![Some(1.0)]).is_err());
        frame
            .insert_column("x", vec![Some(1.0), None, Some(3.0)])
            .unwrap();
        assert!(frame.insert_column("x", vec![None, None, None]).is_err());
    }

    #[test]
    fn index_contiguity_enforced() {
        assert!(TimeIndex::from_dates(vec![d("2022-01-01"), d("2022-01-03")]).is_err());
        let idx = TimeIndex::from_dates(vec![d("2022-01-01"), d("2022-01-02")]).unwrap();
        assert_eq!(idx.position(d("2022-01-02")), Some(1));
        assert_eq!(idx.position(d("2022-01-05")), None);
    }
}
