use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use causalts::counterfactual::{self, ExoPolicy, InterventionConfig};
use causalts::granger::{self, BaseModel, GrangerCell, GrangerConfig};
use causalts::ingest::{load_csv, DatasetSchema};
use causalts::mutual_info::{mi_matrix, select_factors, SelectionResult, SelectionRule};
use causalts::report;
use causalts::synth::{self, GeneratorSpec};
use causalts::timeseries::SeriesFrame;
use causalts::Error;

#[derive(Parser)]
#[command(name = "causalts", version, about = "Causal analysis of daily energy-demand series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and summarize a dataset.
    Ingest(IngestArgs),
    /// Mutual-information factor screening.
    Mi(MiArgs),
    /// Nonlinear Granger causality matrix.
    Granger(GrangerArgs),
    /// Factual vs counterfactual shock quantification.
    Counterfactual(CounterfactualArgs),
    /// Generate synthetic fixture datasets.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset schema JSON; defaults to the gas-demand schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory (default "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct MiArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Nearest-neighbor count for the KSG estimator.
    #[arg(long)]
    k: Option<usize>,
    /// Selection quantile in (0, 1].
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated target columns.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// Comma-separated factor columns.
    #[arg(long, value_delimiter = ',')]
    factors: Vec<String>,
    /// Factors always kept regardless of score.
    #[arg(long, value_delimiter = ',')]
    forced: Vec<String>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    CumulativeShare,
    ScorePercentile,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Lstm,
    Prophet,
}

impl From<BaseArg> for BaseModel {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::Lstm => BaseModel::Lstm,
            BaseArg::Prophet => BaseModel::Prophet,
        }
    }
}

#[derive(Args)]
struct GrangerArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    base: Option<BaseArg>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded reruns per cell; the median p is reported.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
    /// Worker threads for cell evaluation.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExoArg {
    Observed,
    Frozen,
}

#[derive(Args)]
struct CounterfactualArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    base: Option<BaseArg>,
    /// Intervention anchor date.
    #[arg(long)]
    anchor: Option<NaiveDate>,
    /// Last forecast date; defaults to the end of the dataset.
    #[arg(long)]
    horizon_end: Option<NaiveDate>,
    /// Exogenous covariate policy during the rollout.
    #[arg(long, value_enum)]
    exo: Option<ExoArg>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sector targets to quantify.
    #[arg(long, value_delimiter = ',')]
    sectors: Vec<String>,
    /// Exogenous control columns.
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV path; a .meta.json sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// First calendar date of the generated frame.
    #[arg(long, default_value = "2015-01-01")]
    start: NaiveDate,
}

/// Config-file mirror of the shared stage parameters.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    k: Option<usize>,
    quantile: Option<f64>,
    rule: Option<SelectionRule>,
    targets: Option<Vec<String>>,
    factors: Option<Vec<String>>,
    forced: Option<Vec<String>>,
    candidates: Option<Vec<String>>,
    controls: Option<Vec<String>>,
    sectors: Option<Vec<String>>,
    base: Option<BaseModel>,
    tau: Option<usize>,
    seeds: Option<usize>,
    anchor: Option<NaiveDate>,
    horizon_end: Option<NaiveDate>,
    exo: Option<ExoPolicy>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: String) -> Self {
        Self { code: 2, message }
    }

    fn partial(message: String) -> Self {
        Self { code: 1, message }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn load_dataset(
    data: &DataArgs,
    file: &FileConfig,
) -> Result<(SeriesFrame, DatasetSchema, PathBuf), CliError> {
    let path = data
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::usage("no dataset given; pass --data <csv>".into()))?;
    if !path.exists() {
        return Err(CliError::usage(format!(
            "dataset path {} does not exist",
            path.display()
        )));
    }
    let schema = match data.schema.clone().or_else(|| file.schema.clone()) {
        Some(p) => DatasetSchema::from_path(&p)?,
        None => DatasetSchema::gas_default(),
    };
    let (frame, stats) = load_csv(&path, &schema)?;
    if stats.numeric_parse_failures > 0 || stats.gap_rows_inserted > 0 {
        eprintln!(
            "note: {} unparseable numeric cells, {} gap rows inserted",
            stats.numeric_parse_failures, stats.gap_rows_inserted
        );
    }
    Ok((frame, schema, path))
}

fn out_dir(data: &DataArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    let dir = data
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), content)
        .map_err(|e| CliError::usage(format!("cannot write {name}: {e}")))
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    dataset: &Path,
    config: C,
) -> Result<(), CliError> {
    let manifest = report::RunManifest::new(command, seed, config).with_dataset(dataset)?;
    write_out(dir, "manifest.json", &manifest.to_json()?)
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.data.config)?;
    let (frame, schema, path) = load_dataset(&args.data, &file)?;
    let dir = out_dir(&args.data, &file)?;
    println!(
        "{} rows, {} columns, {} .. {}",
        frame.len(),
        frame.column_names().len(),
        frame.index().first(),
        frame.index().last()
    );
    for name in frame.column_names() {
        let col = frame.column(&name)?;
        let missing = col.iter().filter(|v| v.is_none()).count();
        println!("  {name}: {missing} missing");
    }
    write_manifest(
        &dir,
        "ingest",
        0,
        &path,
        serde_json::json!({"schema_targets": schema.targets()}),
    )
}

fn cmd_mi(args: &MiArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.data.config)?;
    let (frame, schema, path) = load_dataset(&args.data, &file)?;
    let dir = out_dir(&args.data, &file)?;

    let k = args.k.or(file.k).unwrap_or(4);
    let quantile = args.quantile.or(file.quantile).unwrap_or(0.9);
    let seed = args.seed.or(file.seed).unwrap_or(42);
    let rule = args
        .rule
        .map(|r| match r {
            RuleArg::CumulativeShare => SelectionRule::CumulativeShare,
            RuleArg::ScorePercentile => SelectionRule::ScorePercentile,
        })
        .or(file.rule)
        .unwrap_or(SelectionRule::CumulativeShare);
    let targets = pick_list(&args.targets, &file.targets, || schema.targets());
    let factors = pick_list(&args.factors, &file.factors, || schema.predictors());
    let forced = pick_list(&args.forced, &file.forced, Vec::new);

    let table = mi_matrix(&frame, &targets, &factors, k, seed)?;
    let mut selections: Vec<SelectionResult> = Vec::new();
    for target in &targets {
        let scores: Vec<_> = table
            .scores
            .iter()
            .filter(|s| &s.target == target)
            .cloned()
            .collect();
        if scores.is_empty() {
            continue;
        }
        selections.push(select_factors(&scores, quantile, &forced, rule)?);
    }
    write_out(&dir, "mi.csv", &report::mi_csv(&table, &selections)?)?;
    for sel in &selections {
        let scores: Vec<_> = table
            .scores
            .iter()
            .filter(|s| s.target == sel.target)
            .collect();
        let labels: Vec<String> = scores.iter().map(|s| s.factor.clone()).collect();
        let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
        let svg = report::bar_chart_svg(
            &format!("mutual information: {}", sel.target),
            &labels,
            &values,
        );
        write_out(&dir, &format!("mi_{}.svg", sel.target), &svg)?;
    }
    write_manifest(
        &dir,
        "mi",
        seed,
        &path,
        serde_json::json!({"k": k, "quantile": quantile, "rule": rule, "targets": targets, "factors": factors, "forced": forced}),
    )?;
    for (target, factor, reason) in &table.failures {
        eprintln!("skipped {factor} -> {target}: {reason}");
    }
    println!("{} scores written to {}", table.scores.len(), dir.join("mi.csv").display());
    Ok(())
}

fn pick_list(
    flag: &[String],
    file: &Option<Vec<String>>,
    default: impl FnOnce() -> Vec<String>,
) -> Vec<String> {
    if !flag.is_empty() {
        flag.to_vec()
    } else if let Some(v) = file {
        v.clone()
    } else {
        default()
    }
}

fn cmd_granger(args: &GrangerArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.data.config)?;
    let (frame, schema, path) = load_dataset(&args.data, &file)?;
    let dir = out_dir(&args.data, &file)?;

    let mut config = GrangerConfig::default();
    config.base_model = args.base.map(BaseModel::from).or(file.base).unwrap_or(config.base_model);
    config.tau = args.tau.or(file.tau).unwrap_or(config.tau);
    config.seed = args.seed.or(file.seed).unwrap_or(config.seed);
    let n_seeds = args.seeds.or(file.seeds).unwrap_or(1);
    config.extra_seeds = (1..n_seeds as u64).map(|i| config.seed.wrapping_add(i)).collect();

    let targets = pick_list(&args.targets, &file.targets, || schema.targets());
    let candidates = pick_list(&args.candidates, &file.candidates, || schema.predictors());
    let controls: BTreeMap<String, Vec<String>> = targets
        .iter()
        .map(|t| (t.clone(), candidates.clone()))
        .collect();

    let cells = if args.jobs > 1 {
        parallel_matrix(&frame, &controls, &candidates, &config, args.jobs)
    } else {
        granger::granger_matrix(&frame, &controls, &candidates, &config)
    };

    write_out(&dir, "granger.csv", &report::granger_csv(&cells)?)?;
    write_out(&dir, "granger.svg", &report::granger_heatmap_svg(&cells))?;
    write_manifest(
        &dir,
        "granger",
        config.seed,
        &path,
        serde_json::json!({"base": config.base_model, "tau": config.tau, "targets": targets, "candidates": candidates, "seeds": n_seeds}),
    )?;
    let failed = cells
        .iter()
        .filter(|c| matches!(c, GrangerCell::Failed { .. }))
        .count();
    println!(
        "{} cells ({} failed) written to {}",
        cells.len(),
        failed,
        dir.join("granger.csv").display()
    );
    if failed > 0 {
        return Err(CliError::partial(format!("{failed} cells failed")));
    }
    Ok(())
}

/// Evaluate cells on a bounded thread pool, preserving deterministic order.
fn parallel_matrix(
    frame: &SeriesFrame,
    controls_per_target: &BTreeMap<String, Vec<String>>,
    candidates: &[String],
    config: &GrangerConfig,
    jobs: usize,
) -> Vec<GrangerCell> {
    let mut sorted = candidates.to_vec();
    sorted.sort();
    let edges: Vec<(String, String, Vec<String>)> = controls_per_target
        .iter()
        .flat_map(|(t, ctl)| {
            sorted
                .iter()
                .filter(|c| *c != t)
                .map(|c| (t.clone(), c.clone(), ctl.clone()))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut out: Vec<Option<GrangerCell>> = vec![None; edges.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut out);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(edges.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= edges.len() {
                    break;
                }
                let (target, candidate, controls) = &edges[i];
                let cell = match granger::granger_test(frame, target, candidate, controls, config) {
                    Ok(r) => GrangerCell::Ok(r),
                    Err(e) => GrangerCell::Failed {
                        target: target.clone(),
                        candidate: candidate.clone(),
                        reason: e.to_string(),
                    },
                };
                slots.lock().expect("poisoned")[i] = Some(cell);
            });
        }
    });
    out.into_iter().map(|c| c.expect("all cells filled")).collect()
}

fn cmd_counterfactual(args: &CounterfactualArgs) -> Result<(), CliError> {
    let file = load_file_config(&args.data.config)?;
    let (frame, schema, path) = load_dataset(&args.data, &file)?;
    let dir = out_dir(&args.data, &file)?;

    let anchor = args
        .anchor
        .or(file.anchor)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(2022, 2, 24).expect("valid date"));
    let horizon_end = args
        .horizon_end
        .or(file.horizon_end)
        .unwrap_or_else(|| frame.index().last());
    let sectors = pick_list(&args.sectors, &file.sectors, || schema.targets());
    let controls = pick_list(&args.controls, &file.controls, || {
        schema
            .predictors()
            .into_iter()
            .filter(|p| p != "War")
            .collect()
    });

    let mut config = InterventionConfig::gas_default(anchor, horizon_end, controls);
    config.base_model = args.base.map(BaseModel::from).or(file.base).unwrap_or(config.base_model);
    config.tau = args.tau.or(file.tau).unwrap_or(config.tau);
    config.seed = args.seed.or(file.seed).unwrap_or(config.seed);
    config.exo_policy = args
        .exo
        .map(|e| match e {
            ExoArg::Observed => ExoPolicy::Observed,
            ExoArg::Frozen => ExoPolicy::Frozen,
        })
        .or(file.exo)
        .unwrap_or(config.exo_policy);

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for sector in &sectors {
        let run = || -> causalts::Result<_> {
            let actual = counterfactual::actual_series(&frame, sector, &config)?;
            let factual = counterfactual::factual_forecast(&frame, sector, &config)?;
            let cf = counterfactual::counterfactual_forecast(&frame, sector, &config)?;
            let rep = counterfactual::monthly_deltas(sector, &actual, &factual, &cf)?;
            Ok((actual, factual, cf, rep))
        };
        match run() {
            Ok((actual, factual, cf, rep)) => {
                let series_svg = report::line_chart_svg(
                    &format!("{sector}: actual vs forecasts (anchor {anchor})"),
                    &["actual", "with-shock", "no-shock"],
                    &[
                        actual.iter().map(|(_, v)| *v).collect(),
                        factual.iter().map(|(_, v)| *v).collect(),
                        cf.iter().map(|(_, v)| *v).collect(),
                    ],
                );
                write_out(&dir, &format!("counterfactual_{sector}.svg"), &series_svg)?;
                let labels: Vec<String> = rep.rows.iter().map(|r| r.month.clone()).collect();
                let deltas: Vec<f64> = rep.rows.iter().map(|r| r.delta_nowar).collect();
                let bars = report::bar_chart_svg(
                    &format!("{sector}: monthly no-shock delta"),
                    &labels,
                    &deltas,
                );
                write_out(&dir, &format!("deltas_{sector}.svg"), &bars)?;
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("sector {sector} failed: {e}");
                failures.push(sector.clone());
            }
        }
    }
    write_out(&dir, "counterfactual.csv", &report::counterfactual_csv(&reports)?)?;
    write_manifest(
        &dir,
        "counterfactual",
        config.seed,
        &path,
        serde_json::json!({
            "anchor": anchor,
            "horizon_end": horizon_end,
            "base": config.base_model,
            "exo": config.exo_policy,
            "tau": config.tau,
            "sectors": sectors,
            "controls": config.controls,
        }),
    )?;
    println!(
        "{} sector reports written to {}",
        reports.len(),
        dir.join("counterfactual.csv").display()
    );
    if !failures.is_empty() {
        return Err(CliError::partial(format!("sectors failed: {}", failures.join(", "))));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CliError::usage(format!("cannot read spec {}: {e}", args.spec.display())))?;
    let spec: GeneratorSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad generator spec: {e}")))?;
    let generated = synth::generate(&spec, args.start)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let names = generated.frame.column_names();
    let mut header = vec!["Date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(Error::from)?;
    let columns: Vec<&[Option<f64>]> = names
        .iter()
        .map(|n| generated.frame.column(n).expect("own column"))
        .collect();
    for (t, date) in generated.frame.index().dates().iter().enumerate() {
        let mut row = vec![date.to_string()];
        for col in &columns {
            row.push(col[t].map(|v| format!("{v:.12}")).unwrap_or_default());
        }
        w.write_record(&row).map_err(Error::from)?;
    }
    let csv_text = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8");
    std::fs::write(&args.out, csv_text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", args.out.display())))?;

    let meta = serde_json::json!({
        "spec": spec,
        "start": args.start,
        "anchor": generated.anchor_date(),
        "columns": names,
    });
    let meta_path = args.out.with_extension("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).map_err(Error::from)?)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", meta_path.display())))?;
    println!("wrote {} and {}", args.out.display(), meta_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Mi(a) => cmd_mi(a),
        Command::Granger(a) => cmd_granger(a),
        Command::Counterfactual(a) => cmd_counterfactual(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
