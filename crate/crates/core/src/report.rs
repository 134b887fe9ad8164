//! Result serialization: CSV tables, run manifests, and small standalone SVG
//! charts with no rendering dependencies.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use crate::counterfactual::CounterfactualReport;
use crate::error::Result;
use crate::granger::GrangerCell;
use crate::mutual_info::{MiTable, SelectionResult};

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

/// `target,factor,mi_nats,n,k,selected` rows, sorted by target then
/// descending score.
pub fn mi_csv(table: &MiTable, selections: &[SelectionResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "factor", "mi_nats", "n", "k", "selected"])?;
    let mut scores = table.scores.clone();
    scores.sort_by(|a, b| {
        a.target
            .cmp(&b.target)
            .then(b.value.total_cmp(&a.value))
            .then(a.factor.cmp(&b.factor))
    });
    for s in &scores {
        let selected = selections
            .iter()
            .find(|sel| sel.target == s.target)
            .map(|sel| sel.selected.contains(&s.factor))
            .unwrap_or(false);
        w.write_record([
            s.target.as_str(),
            s.factor.as_str(),
            &fmt_f64(s.value),
            &s.n.to_string(),
            &s.k.to_string(),
            &selected.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}

/// `target,candidate,base_model,n_pairs,W,p_value,mae_restricted,
/// mae_augmented,seed,status` rows.
pub fn granger_csv(cells: &[GrangerCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "target",
        "candidate",
        "base_model",
        "n_pairs",
        "W",
        "p_value",
        "mae_restricted",
        "mae_augmented",
        "seed",
        "status",
    ])?;
    for cell in cells {
        match cell {
            GrangerCell::Ok(r) => w.write_record([
                r.target.as_str(),
                r.candidate.as_str(),
                &r.base_model.to_string(),
                &r.n_pairs.to_string(),
                &fmt_f64(r.w),
                &format!("{:.6e}", r.p_value),
                &fmt_f64(r.mae_restricted),
                &fmt_f64(r.mae_augmented),
                &r.seed.to_string(),
                "ok",
            ])?,
            GrangerCell::Failed {
                target,
                candidate,
                reason,
            } => w.write_record([
                target.as_str(),
                candidate.as_str(),
                "",
                "",
                "",
                "",
                "",
                "",
                "",
                &format!("failed: {reason}"),
            ])?,
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}

/// `sector,month,actual_mcm,forecast_war_mcm,forecast_nowar_mcm,
/// delta_war_mcm,delta_nowar_mcm,delta_war_pct,delta_nowar_pct` rows.
pub fn counterfactual_csv(reports: &[CounterfactualReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sector",
        "month",
        "actual_mcm",
        "forecast_war_mcm",
        "forecast_nowar_mcm",
        "delta_war_mcm",
        "delta_nowar_mcm",
        "delta_war_pct",
        "delta_nowar_pct",
    ])?;
    let pct = |p: Option<f64>| p.map(fmt_f64).unwrap_or_else(|| "NA".into());
    for report in reports {
        for row in &report.rows {
            w.write_record([
                report.sector.as_str(),
                row.month.as_str(),
                &fmt_f64(row.actual),
                &fmt_f64(row.forecast_war),
                &fmt_f64(row.forecast_nowar),
                &fmt_f64(row.delta_war),
                &fmt_f64(row.delta_nowar),
                &pct(row.delta_war_pct),
                &pct(row.delta_nowar_pct),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}

/// Echo of everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub dataset_sha256: Option<String>,
    pub config: C,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(command: &str, seed: u64, config: C) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            dataset_sha256: None,
            config,
        }
    }

    pub fn with_dataset(mut self, path: &Path) -> Result<Self> {
        self.dataset_sha256 = Some(sha256_file(path)?);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Hex-encoded SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

const SVG_WIDTH: f64 = 900.0;
const SVG_HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Scale {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let span = if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        };
        self.lo_px + (v - self.min) / span * (self.hi_px - self.lo_px)
    }
}

fn svg_header(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = write!(
        s,
        "<rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        SVG_WIDTH / 2.0,
        xml_escape(title)
    );
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, y_scale: &Scale) {
    let x0 = MARGIN;
    let x1 = SVG_WIDTH - MARGIN;
    let y0 = SVG_HEIGHT - MARGIN;
    let y1 = MARGIN;
    let _ = write!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    for i in 0..=4 {
        let v = y_scale.min + (y_scale.max - y_scale.min) * i as f64 / 4.0;
        let y = y_scale.map(v);
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.1}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
}

/// Multi-series line chart over a shared x index.
pub fn line_chart_svg(title: &str, labels: &[&str], series: &[Vec<f64>]) -> String {
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let all: Vec<f64> = series.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let (min, max) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let y = Scale {
        min,
        max,
        lo_px: SVG_HEIGHT - MARGIN,
        hi_px: MARGIN,
    };
    let n = series.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let x = Scale {
        min: 0.0,
        max: (n - 1) as f64,
        lo_px: MARGIN,
        hi_px: SVG_WIDTH - MARGIN,
    };
    let mut s = svg_header(title);
    axes(&mut s, &y);
    for (i, (label, values)) in labels.iter().zip(series).enumerate() {
        let color = colors[i % colors.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| format!("{:.2},{:.2}", x.map(t as f64), y.map(*v)))
            .collect();
        let _ = write!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            SVG_WIDTH - MARGIN + 5.0,
            MARGIN + 16.0 * i as f64,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bar chart with one labeled bar per value.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let (min, max) = values
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let y = Scale {
        min,
        max,
        lo_px: SVG_HEIGHT - MARGIN,
        hi_px: MARGIN,
    };
    let mut s = svg_header(title);
    axes(&mut s, &y);
    let n = values.len().max(1);
    let slot = (SVG_WIDTH - 2.0 * MARGIN) / n as f64;
    let bar_w = (slot * 0.7).min(60.0);
    let baseline = y.map(0.0);
    for (i, (label, v)) in labels.iter().zip(values).enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let yv = y.map(*v);
        let (top, h) = if yv < baseline {
            (yv, baseline - yv)
        } else {
            (baseline, yv - baseline)
        };
        let fill = if *v < 0.0 { "#d62728" } else { "#1f77b4" };
        let _ = write!(
            s,
            "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n",
            cx - bar_w / 2.0
        );
        let _ = write!(
            s,
            "<text x=\"{cx:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            SVG_HEIGHT - MARGIN + 16.0,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of p-values for the causal matrix, candidates across, targets
/// down. Darker means smaller p.
pub fn granger_heatmap_svg(cells: &[GrangerCell]) -> String {
    let mut targets: Vec<&str> = Vec::new();
    let mut candidates: Vec<&str> = Vec::new();
    for cell in cells {
        let (t, c) = match cell {
            GrangerCell::Ok(r) => (r.target.as_str(), r.candidate.as_str()),
            GrangerCell::Failed { target, candidate, .. } => (target.as_str(), candidate.as_str()),
        };
        if !targets.contains(&t) {
            targets.push(t);
        }
        if !candidates.contains(&c) {
            candidates.push(c);
        }
    }
    let mut s = svg_header("causal matrix (p-values)");
    let w = (SVG_WIDTH - 2.0 * MARGIN) / candidates.len().max(1) as f64;
    let h = (SVG_HEIGHT - 2.0 * MARGIN) / targets.len().max(1) as f64;
    for cell in cells {
        let (t, c, color, text) = match cell {
            GrangerCell::Ok(r) => {
                // log scale: p = 1 -> white, p <= 1e-6 -> saturated
                let strength = (-(r.p_value.max(1e-300)).log10() / 6.0).clamp(0.0, 1.0);
                let channel = (255.0 * (1.0 - strength)) as u8;
                (
                    r.target.as_str(),
                    r.candidate.as_str(),
                    format!("rgb({channel},{channel},255)"),
                    format!("{:.1e}", r.p_value),
                )
            }
            GrangerCell::Failed { target, candidate, .. } => (
                target.as_str(),
                candidate.as_str(),
                "rgb(220,220,220)".to_string(),
                "n/a".to_string(),
            ),
        };
        let row = targets.iter().position(|x| *x == t).unwrap();
        let col = candidates.iter().position(|x| *x == c).unwrap();
        let x = MARGIN + col as f64 * w;
        let y = MARGIN + row as f64 * h;
        let _ = write!(
            s,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"{color}\" stroke=\"white\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            x + w / 2.0,
            y + h / 2.0 + 4.0,
            text
        );
    }
    for (row, t) in targets.iter().enumerate() {
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 6.0,
            MARGIN + (row as f64 + 0.5) * h + 4.0,
            xml_escape(t)
        );
    }
    for (col, c) in candidates.iter().enumerate() {
        let _ = write!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN + (col as f64 + 0.5) * w,
            MARGIN - 8.0,
            xml_escape(c)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterfactual::MonthRow;
    use crate::granger::{BaseModel, GrangerResult};
    use crate::mutual_info::MiScore;

    fn sample_cells() -> Vec<GrangerCell> {
        vec![
            GrangerCell::Ok(GrangerResult {
                target: "LDZ".into(),
                candidate: "War".into(),
                base_model: BaseModel::Lstm,
                n_pairs: 120,
                w: 900.0,
                p_value: 1.1e-16,
                mae_restricted: 12.0,
                mae_augmented: 10.5,
                seed: 42,
            }),
            GrangerCell::Failed {
                target: "LDZ".into(),
                candidate: "X".into(),
                reason: "degenerate column".into(),
            },
        ]
    }

    #[test]
    fn mi_csv_header_and_flag() {
        let table = MiTable {
            scores: vec![
                MiScore {
                    target: "LDZ".into(),
                    factor: "HDD".into(),
                    value: 0.8,
                    n: 500,
                    k: 4,
                },
                MiScore {
                    target: "LDZ".into(),
                    factor: "noise".into(),
                    value: 0.01,
                    n: 500,
                    k: 4,
                },
            ],
            failures: vec![],
        };
        let sel = SelectionResult {
            target: "LDZ".into(),
            ranked: vec![],
            selected: vec!["HDD".into()],
            coverage: 0.99,
            degenerate: false,
        };
        let csv = mi_csv(&table, &[sel]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "target,factor,mi_nats,n,k,selected"
        );
        assert_eq!(lines.next().unwrap(), "LDZ,HDD,0.800000,500,4,true");
        assert_eq!(lines.next().unwrap(), "LDZ,noise,0.010000,500,4,false");
    }

    #[test]
    fn granger_csv_rows() {
        let csv = granger_csv(&sample_cells()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("LDZ,War,lstm,120,900.000000,1.100000e-16"));
        assert!(lines[2].contains("failed: degenerate column"));
    }

    #[test]
    fn counterfactual_csv_na_for_missing_pct() {
        let report = CounterfactualReport {
            sector: "GTP".into(),
            rows: vec![MonthRow {
                month: "2022-03".into(),
                actual: 0.0,
                forecast_war: 5.0,
                forecast_nowar: 4.0,
                delta_war: 5.0,
                delta_nowar: 4.0,
                delta_war_pct: None,
                delta_nowar_pct: None,
            }],
            omitted_months: vec![],
        };
        let csv = counterfactual_csv(&[report]).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with("NA,NA"));
    }

    #[test]
    fn manifest_embeds_dataset_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, b"Date,LDZ\n2020-01-01,1.0\n").unwrap();
        let manifest = RunManifest::new("mi", 42, serde_json::json!({"k": 4}))
            .with_dataset(&path)
            .unwrap();
        let json = manifest.to_json().unwrap();
        assert!(json.contains("dataset_sha256"));
        let expect = sha256_file(&path).unwrap();
        assert_eq!(expect.len(), 64);
        assert!(json.contains(&expect));
        // hashing is over bytes, so a one-byte change flips the digest
        std::fs::write(&path, b"Date,LDZ\n2020-01-01,1.1\n").unwrap();
        assert_ne!(sha256_file(&path).unwrap(), expect);
    }

    #[test]
    fn svg_outputs_well_formed() {
        let line = line_chart_svg("demo", &["a", "b"], &[vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]]);
        assert!(line.starts_with("<svg"));
        assert!(line.trim_end().ends_with("</svg>"));
        assert_eq!(line.matches("<polyline").count(), 2);

        let bars = bar_chart_svg("deltas", &["2022-03".into(), "2022-04".into()], &[-5.0, 3.0]);
        assert_eq!(bars.matches("<rect").count(), 3); // background + 2 bars
        assert!(bars.contains("#d62728"));

        let heat = granger_heatmap_svg(&sample_cells());
        assert!(heat.contains("1.1e-16"));
        assert!(heat.contains("n/a"));
    }
}
