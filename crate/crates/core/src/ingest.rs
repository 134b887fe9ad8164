//! Dataset loading, schema validation, feature engineering, and supervised
//! windowing.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeseries::{
    cyclical_month, hdd_from_temperature, lag, war_dummy, workday_flag, FeatureSpec, SeriesFrame,
    TimeIndex,
};

/// Role of a column in the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Target,
    Predictor,
    Auxiliary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub unit: String,
    pub kind: ColumnKind,
}

/// Declared layout of the input CSV: date column plus named data columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub columns: BTreeMap<String, ColumnSpec>,
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

impl DatasetSchema {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Schema of the published gas-demand snapshot: four sector targets plus
    /// the predictor set used throughout the analysis.
    pub fn gas_default() -> Self {
        let mut columns = BTreeMap::new();
        let mut add = |name: &str, unit: &str, kind: ColumnKind| {
            columns.insert(
                name.to_string(),
                ColumnSpec {
                    unit: unit.to_string(),
                    kind,
                },
            );
        };
        for t in ["NGD", "LDZ", "IND", "GTP"] {
            add(t, "mcm/day", ColumnKind::Target);
        }
        add("HDD", "degree-days", ColumnKind::Predictor);
        add("Rus", "mcm/day", ColumnKind::Predictor);
        add("THE Price", "EUR/MWh", ColumnKind::Predictor);
        add("DE wind", "index", ColumnKind::Predictor);
        add("DE solar", "index", ColumnKind::Predictor);
        add("French nuclear", "index", ColumnKind::Predictor);
        add("UK NL Production", "mcm/day", ColumnKind::Predictor);
        add("EU storage", "mcm", ColumnKind::Predictor);
        add("EU LNG", "mcm/day", ColumnKind::Predictor);
        add("DE index", "index", ColumnKind::Predictor);
        Self {
            date_column: "Date".to_string(),
            date_format: default_date_format(),
            columns,
        }
    }

    pub fn targets(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, s)| s.kind == ColumnKind::Target)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn predictors(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, s)| s.kind == ColumnKind::Predictor)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Outcome counters from a CSV load.
#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    /// Cells that failed numeric parsing and were recorded as missing.
    pub numeric_parse_failures: usize,
    /// Rows inserted to fill calendar gaps.
    pub gap_rows_inserted: usize,
}

/// Load a delimited UTF-8 file with a header row into a contiguous frame.
///
/// Date gaps are filled with missing-valued rows; unparseable numeric cells
/// become missing and are counted in [`LoadStats`].
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<(SeriesFrame, LoadStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let date_pos = headers
        .iter()
        .position(|h| h == &schema.date_column)
        .ok_or_else(|| Error::Schema(format!("missing date column {}", schema.date_column)))?;
    for required in schema.columns.keys() {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!("missing required column {required}")));
        }
    }

    let mut stats = LoadStats::default();
    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record?;
        let date_text = record.get(date_pos).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_text, &schema.date_format).map_err(|e| {
            Error::Row {
                line,
                msg: format!("unparseable date {date_text:?}: {e}"),
            }
        })?;
        let mut values = Vec::with_capacity(headers.len());
        for (j, cell) in record.iter().enumerate() {
            if j == date_pos {
                values.push(None);
                continue;
            }
            let cell = cell.trim();
            if cell.is_empty() {
                values.push(None);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(Some(v)),
                    _ => {
                        stats.numeric_parse_failures += 1;
                        values.push(None);
                    }
                }
            }
        }
        rows.push((date, values));
    }
    if rows.is_empty() {
        return Err(Error::Schema("empty file".into()));
    }

    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Schema(format!("duplicate date {}", w[0].0)));
        }
    }

    let index = TimeIndex::span(rows[0].0, rows.last().unwrap().0)?;
    let n = index.len();
    stats.gap_rows_inserted = n - rows.len();

    let mut by_date: BTreeMap<NaiveDate, &Vec<Option<f64>>> = BTreeMap::new();
    for (d, v) in &rows {
        by_date.insert(*d, v);
    }

    let mut frame = SeriesFrame::new(index.clone());
    for (j, name) in headers.iter().enumerate() {
        if j == date_pos {
            continue;
        }
        let mut col = vec![None; n];
        for (t, date) in index.dates().iter().enumerate() {
            if let Some(values) = by_date.get(date) {
                col[t] = values[j];
            }
        }
        frame.insert_column(name, col)?;
    }
    Ok((frame, stats))
}

/// Deterministic output name of a feature spec (the lag of "HDD" by one day
/// is "HDD-1", the war dummy is whatever name the spec carries, and so on).
pub fn feature_output_names(spec: &FeatureSpec) -> Vec<String> {
    match spec {
        FeatureSpec::Lag { source, k } => vec![format!("{source}-{k}")],
        FeatureSpec::CyclicalMonth { name } => {
            vec![format!("{name}_sin"), format!("{name}_cos")]
        }
        FeatureSpec::WorkdayFlag { name } => vec![name.clone()],
        FeatureSpec::WarDummy { name, .. } => vec![name.clone()],
        FeatureSpec::HddFromTemperature { name, .. } => vec![name.clone()],
    }
}

/// Append one derived column per spec to a copy of the frame.
pub fn build_features(frame: &SeriesFrame, specs: &[FeatureSpec]) -> Result<SeriesFrame> {
    let mut out = frame.clone();
    for spec in specs {
        for name in feature_output_names(spec) {
            if out.has_column(&name) {
                return Err(Error::InvalidArgument(format!(
                    "derived column {name} collides with an existing column"
                )));
            }
        }
        match spec {
            FeatureSpec::Lag { source, k } => {
                let lagged = lag(out.column(source)?, *k)?;
                out.insert_column(&format!("{source}-{k}"), lagged)?;
            }
            FeatureSpec::CyclicalMonth { name } => {
                let (mut sins, mut coss) = (Vec::new(), Vec::new());
                for d in out.index().dates() {
                    let (s, c) = cyclical_month(*d);
                    sins.push(Some(s));
                    coss.push(Some(c));
                }
                out.insert_column(&format!("{name}_sin"), sins)?;
                out.insert_column(&format!("{name}_cos"), coss)?;
            }
            FeatureSpec::WorkdayFlag { name } => {
                let col = out
                    .index()
                    .dates()
                    .iter()
                    .map(|d| Some(workday_flag(*d)))
                    .collect();
                out.insert_column(name, col)?;
            }
            FeatureSpec::WarDummy { name, anchor } => {
                let col = out
                    .index()
                    .dates()
                    .iter()
                    .map(|d| Some(war_dummy(*d, *anchor)))
                    .collect();
                out.insert_column(name, col)?;
            }
            FeatureSpec::HddFromTemperature { source, name, base } => {
                let col = out
                    .column(source)?
                    .iter()
                    .map(|v| v.map(|t| hdd_from_temperature(t, *base)))
                    .collect();
                out.insert_column(name, col)?;
            }
        }
    }
    Ok(out)
}

/// One windowed training/evaluation sample.
#[derive(Debug, Clone)]
pub struct Sample {
    /// tau rows (oldest first), each `feature_names.len()` wide.
    pub window: Vec<Vec<f64>>,
    pub target: f64,
    pub date: NaiveDate,
}

/// Windowed supervised samples for one target sector.
#[derive(Debug, Clone)]
pub struct SupervisedSet {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    pub tau: usize,
    pub target_name: String,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.samples.iter().map(|s| s.date).collect()
    }

    /// Keep only samples whose dates appear in `keep` (sorted or not).
    pub fn restrict_to_dates(&self, keep: &std::collections::BTreeSet<NaiveDate>) -> SupervisedSet {
        SupervisedSet {
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(&s.date))
                .cloned()
                .collect(),
            feature_names: self.feature_names.clone(),
            tau: self.tau,
            target_name: self.target_name.clone(),
        }
    }
}

/// Build windowed samples: input rows cover [t-tau, t-1], the target is the
/// value at t. The target column is always included as the first feature so
/// its own lags enter every window; windows touching any missing value are
/// skipped.
pub fn make_windows(
    frame: &SeriesFrame,
    target: &str,
    features: &[String],
    tau: usize,
) -> Result<SupervisedSet> {
    if tau < 1 {
        return Err(Error::InvalidArgument("tau must be >= 1".into()));
    }
    let mut feature_names: Vec<String> = vec![target.to_string()];
    for f in features {
        if !feature_names.contains(f) {
            feature_names.push(f.clone());
        }
    }
    let cols: Vec<&[Option<f64>]> = feature_names
        .iter()
        .map(|n| frame.column(n))
        .collect::<Result<_>>()?;
    let target_col = frame.column(target)?;

    let n = frame.len();
    let mut samples = Vec::new();
    for t in tau..n {
        let Some(y) = target_col[t] else { continue };
        let mut window = Vec::with_capacity(tau);
        let mut complete = true;
        'rows: for r in (t - tau)..t {
            let mut row = Vec::with_capacity(cols.len());
            for col in &cols {
                match col[r] {
                    Some(v) => row.push(v),
                    None => {
                        complete = false;
                        break 'rows;
                    }
                }
            }
            window.push(row);
        }
        if complete {
            samples.push(Sample {
                window,
                target: y,
                date: frame.index().dates()[t],
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no complete windows for target {target} at tau {tau}"
        )));
    }
    Ok(SupervisedSet {
        samples,
        feature_names,
        tau,
        target_name: target.to_string(),
    })
}
