use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dstream::cluster::{run_dstream, GridLabels};
use dstream::eval::{audit_stream, compare, ComparisonSettings, LabeledData};
use dstream::features::{FeatureExtractor, HealthStatus};
use dstream::ingest::{
    calibrate, generate_synthetic, normalize, read_csv, write_csv, Config, Dataset, Normalized,
    Shape, SyntheticSpec,
};
use dstream::kmeans::kmeans_fit;
use dstream::model::{status_map, StatusSource, TrainedModel};
use dstream::settings::Settings;
use dstream::{map_to_grid, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "dstream",
    version,
    about = "Density-grid stream clustering and a K-means baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a stream with D-Stream.
    Dstream(DstreamArgs),
    /// Cluster a table with K-means.
    Kmeans(KmeansArgs),
    /// Per-tick features and risk of configured vital signs.
    Features(FeaturesArgs),
    /// FIT/UNFIT per record using a trained model.
    Classify(ClassifyArgs),
    /// Accuracy table of K-means against D-Stream on labeled data.
    Compare(CompareArgs),
    /// Write a synthetic labeled stream.
    Gen(GenArgs),
    /// Audit engine densities against a brute-force oracle.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct DstreamArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    cm: Option<f64>,
    #[arg(long)]
    cl: Option<f64>,
    #[arg(long)]
    gap: Option<u64>,
    /// One count for every dimension, or one per dimension.
    #[arg(long, value_delimiter = ',')]
    partitions: Option<Vec<u32>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KmeansArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory holding a model.txt written by `dstream` or `kmeans`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    shape: Shape,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Reason a command stopped, mapped onto the exit code.
enum Failure {
    Usage(String),
    Data(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidGeometry(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Dstream(a) => cmd_dstream(a),
        Command::Kmeans(a) => cmd_kmeans(a),
        Command::Features(a) => cmd_features(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Gen(a) => cmd_gen(a),
        Command::OracleCheck(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}

fn settings(
    path: Option<&Path>,
    overrides: &[(&str, Option<String>)],
) -> Result<Settings, Failure> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(*key, v.clone());
        }
    }
    Ok(Settings::new(config)?)
}

fn joined<T: ToString>(v: &Option<Vec<T>>) -> Option<String> {
    v.as_ref()
        .map(|v| v.iter().map(T::to_string).collect::<Vec<_>>().join(","))
}

fn load(path: &Path, settings: &Settings) -> Result<(Dataset, Normalized), Failure> {
    let (schema, data) = read_csv(path, &settings.schema)?;
    if data.features.is_empty() {
        return Err(Failure::Data("input has no feature columns".into()));
    }
    if data.is_empty() {
        return Err(Failure::Data("input has no rows".into()));
    }
    let bounds = calibrate(&data, &schema.bounds)?;
    let norm = normalize(&data, &bounds)?;
    if norm.clamped > 0 {
        eprintln!(
            "note: {} cells fell outside their bounds and were clamped",
            norm.clamped
        );
    }
    Ok((data, norm))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn csv_text(
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Data(e.to_string()))
}

/// Cluster statuses from the training data: its labels when they read as
/// statuses, else the configured risk column, else none.
fn status_source(
    data: &Dataset,
    settings: &Settings,
) -> Result<(Vec<HealthStatus>, Vec<f64>), Failure> {
    if let Some(labels) = &data.labels {
        if let Ok(s) = labels
            .iter()
            .map(|l| l.parse())
            .collect::<Result<Vec<HealthStatus>, _>>()
        {
            return Ok((s, Vec::new()));
        }
    }
    let column = settings.risk_column().unwrap_or("global_risk");
    match data.column(column) {
        Some(r) => Ok((Vec::new(), r)),
        None if settings.risk_column().is_some() => Err(Failure::Data(format!(
            "risk column '{column}' is not a feature column"
        ))),
        None => Ok((Vec::new(), Vec::new())),
    }
}

fn source<'a>(statuses: &'a [HealthStatus], risks: &'a [f64]) -> StatusSource<'a> {
    if !statuses.is_empty() {
        StatusSource::Labels(statuses)
    } else if !risks.is_empty() {
        StatusSource::Risk(risks)
    } else {
        StatusSource::None
    }
}

fn cmd_dstream(a: DstreamArgs) -> CmdResult {
    let s = settings(
        a.config.as_deref(),
        &[
            ("lambda", a.lambda.map(|v| v.to_string())),
            ("cm", a.cm.map(|v| v.to_string())),
            ("cl", a.cl.map(|v| v.to_string())),
            ("gap", a.gap.map(|v| v.to_string())),
            ("partitions", joined(&a.partitions)),
        ],
    )?;
    let (data, norm) = load(&a.input, &s)?;
    let geom = s.geometry(data.features.len())?;
    let params = s.decay()?;
    let radius = s.radius()?;
    let (state, events) = run_dstream(&norm.records, geom.clone(), params)?;
    create_dir(&a.out)?;

    let d = geom.dims();
    let mut header = vec!["tick".to_string()];
    header.extend((0..d).map(|i| format!("grid_{i}")));
    header.push("cluster".into());
    let rows = norm
        .records
        .iter()
        .map(|r| {
            let g = map_to_grid(r, &geom)?;
            let mut row = vec![r.tick.to_string()];
            row.extend(g.coords().iter().map(u32::to_string));
            row.push(
                state
                    .label_of(&g)
                    .map_or_else(|| "none".to_string(), |l| l.0.to_string()),
            );
            Ok(row)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    write(&a.out.join("assignments.csv"), csv_text(&header, rows)?)?;

    let mut log = String::new();
    for e in &events {
        let _ = writeln!(log, "{e}");
    }
    write(&a.out.join("events.log"), log)?;

    let grids = GridLabels::from_state(&state);
    let assignment = norm
        .records
        .iter()
        .map(|r| grids.lookup(&r.values, radius).map(|l| l.map(|l| l.0)))
        .collect::<Result<Vec<_>, Error>>()?;
    let (statuses, risks) = status_source(&data, &s)?;
    let clusters: Vec<u64> = grids.cluster_labels().into_iter().map(|l| l.0).collect();
    let mut model =
        TrainedModel::dstream(data.features.clone(), norm.bounds.clone(), grids, radius);
    let rule = source(&statuses, &risks);
    model.status = status_map(&assignment, rule, clusters)?;
    model.status_rule = rule.rule().into();
    write(&a.out.join("model.txt"), model.to_text())?;

    println!(
        "records={} grids={} clusters={} events={} gap={} status_rule={}",
        norm.records.len(),
        state.grid_list().len(),
        state.cluster_count(),
        events.len(),
        params.gap,
        model.status_rule
    );
    Ok(())
}

fn cmd_kmeans(a: KmeansArgs) -> CmdResult {
    let s = settings(
        a.config.as_deref(),
        &[
            ("k", a.k.map(|v| v.to_string())),
            ("seed", a.seed.map(|v| v.to_string())),
            ("max_iter", a.max_iter.map(|v| v.to_string())),
            ("tol", a.tol.map(|v| v.to_string())),
        ],
    )?;
    let (data, norm) = load(&a.input, &s)?;
    let points: Vec<Vec<f64>> = norm.records.iter().map(|r| r.values.clone()).collect();
    let fit = kmeans_fit(&points, &s.kmeans()?)?;
    create_dir(&a.out)?;

    let rows = norm
        .records
        .iter()
        .zip(&fit.assignment)
        .map(|(r, c)| vec![r.tick.to_string(), c.to_string()]);
    write(
        &a.out.join("assignments.csv"),
        csv_text(&["tick".into(), "cluster".into()], rows)?,
    )?;

    let mut header = vec!["cluster".to_string()];
    header.extend(data.features.iter().cloned());
    let rows = fit.centroids.iter().enumerate().map(|(i, c)| {
        let mut row = vec![i.to_string()];
        row.extend(c.iter().map(f64::to_string));
        row
    });
    write(&a.out.join("centroids.csv"), csv_text(&header, rows)?)?;

    let assignment: Vec<Option<u64>> = fit.assignment.iter().map(|&c| Some(c as u64)).collect();
    let (statuses, risks) = status_source(&data, &s)?;
    let mut model = TrainedModel::kmeans(data.features.clone(), norm.bounds.clone(), &fit);
    let rule = source(&statuses, &risks);
    model.status = status_map(&assignment, rule, 0..fit.k() as u64)?;
    model.status_rule = rule.rule().into();
    write(&a.out.join("model.txt"), model.to_text())?;

    println!(
        "records={} k={} iterations={} converged={} sse={} status_rule={}",
        points.len(),
        fit.k(),
        fit.iterations,
        fit.converged,
        fit.sse,
        model.status_rule
    );
    Ok(())
}

fn cmd_features(a: FeaturesArgs) -> CmdResult {
    let s = settings(
        a.config.as_deref(),
        &[("window", a.window.map(|v| v.to_string()))],
    )?;
    let (schema, data) = read_csv(&a.input, &s.schema)?;
    let signals = s.signal_schema(&schema.features())?;
    let columns: Vec<usize> = signals
        .signals
        .iter()
        .map(|sig| {
            data.features
                .iter()
                .position(|f| *f == sig.name)
                .expect("schema built from these columns")
        })
        .collect();
    let mut header = vec!["tick".to_string()];
    for sig in &signals.signals {
        for part in ["offset", "slope", "dist", "z1", "z2", "z3"] {
            header.push(format!("{}.{part}", sig.name));
        }
    }
    header.push("global_risk".into());
    let mut extractor = FeatureExtractor::new(signals, s.window()?, s.risk_weights()?)?;
    let mut rows = Vec::with_capacity(data.len());
    for (row, &tick) in data.rows.iter().zip(&data.ticks) {
        let values: Vec<f64> = columns.iter().map(|&j| row[j]).collect();
        let f = extractor.push(tick, &values)?;
        let mut out = vec![tick.to_string()];
        for (fv, z) in f.features.iter().zip(&f.risks) {
            for v in [fv.offset, fv.slope, fv.dist, z.z1, z.z2, z.z3] {
                out.push(v.to_string());
            }
        }
        out.push(f.global.to_string());
        rows.push(out);
    }
    create_dir(&a.out)?;
    write(&a.out.join("features.csv"), csv_text(&header, rows)?)?;
    println!("ticks={} signals={}", data.len(), columns.len());
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> CmdResult {
    let path = a.model.join("model.txt");
    let text =
        fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let model = TrainedModel::from_text(&text)?;
    let (_, data) = read_csv(&a.input, &Default::default())?;
    let columns = model
        .features
        .iter()
        .map(|f| {
            data.features
                .iter()
                .position(|c| c == f)
                .ok_or_else(|| Failure::Data(format!("input lacks model feature '{f}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let projected = Dataset {
        features: model.features.clone(),
        rows: data
            .rows
            .iter()
            .map(|r| columns.iter().map(|&j| r[j]).collect())
            .collect(),
        ticks: data.ticks.clone(),
        labels: None,
    };
    let norm = normalize(&projected, &model.bounds)?;
    let mut rows = Vec::with_capacity(norm.records.len());
    let mut unfit = 0;
    for r in &norm.records {
        let status = model.classify(&r.values)?;
        unfit += usize::from(status == HealthStatus::Unfit);
        rows.push(vec![r.tick.to_string(), status.to_string()]);
    }
    create_dir(&a.out)?;
    write(
        &a.out.join("status.csv"),
        csv_text(&["tick".into(), "status".into()], rows)?,
    )?;
    println!(
        "records={} fit={} unfit={unfit}",
        norm.records.len(),
        norm.records.len() - unfit
    );
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let s = settings(a.config.as_deref(), &[])?;
    let (data, norm) = load(&a.input, &s)?;
    let truth = data
        .labels
        .as_ref()
        .ok_or_else(|| Failure::Data("compare needs a label column".into()))?;
    let settings = ComparisonSettings {
        geometry: s.geometry(data.features.len())?,
        decay: s.decay()?,
        kmeans: s.kmeans()?,
        radius: s.radius()?,
    };
    let result = compare(
        LabeledData {
            records: &norm.records,
            truth,
        },
        &settings,
    )?;
    create_dir(&a.out)?;
    let table = result.report.render_table();
    write(&a.out.join("report.txt"), &table)?;
    write(&a.out.join("report.kv"), result.render_kv())?;
    print!("{table}");
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let stream = generate_synthetic(&SyntheticSpec::new(a.shape, a.n, a.seed))?;
    let mut buf = Vec::new();
    write_csv(
        &mut buf,
        &stream.features,
        &stream.records,
        Some(&stream.labels),
    )?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(&a.out, buf)
}

fn cmd_oracle(a: OracleArgs) -> CmdResult {
    let s = settings(a.config.as_deref(), &[])?;
    let (data, norm) = load(&a.input, &s)?;
    let geom = s.geometry(data.features.len())?;
    let (_, report) = audit_stream(&norm.records, geom, s.decay()?, ORACLE_TOLERANCE)?;
    println!(
        "ticks={} offline_phases={} removals={} max_discrepancy={:e} max_total_density={} bound={}",
        report.ticks,
        report.offline_phases,
        report.removals,
        report.max_discrepancy,
        report.max_total_density,
        report.total_density_bound
    );
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        println!("FAIL");
        Err(Failure::Invariant(format!(
            "{} audit violations",
            report.violations.len()
        )))
    }
}
