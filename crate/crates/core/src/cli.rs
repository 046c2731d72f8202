//! Command-line front end: group ingestion, computations and reports.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::algebra::{from_catalog_name, validate, StepTwoAlgebra};
use crate::anisotropic::{self, verify_family};
use crate::calculus::{defect_scan, sup_defect, DefectKind};
use crate::deviation::{deviation, deviation_at_metric, SolverConfig};
use crate::metric::VerticalMetric;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Groups listed by the `catalog` command.
pub const CATALOG: &[&str] = &[
    "heis(1)",
    "heis(1,1)",
    "heis(1,1,1)",
    "heis(1,2)",
    "heis(1,3)",
    "heis(1/2,1)",
    "heis(1/2,1,1,1)",
    "free(2)",
    "free(3)",
    "free(4)",
    "free(5)",
    "geps(2,1)",
    "geps(3,1)",
    "geps(4,1)",
    "gbar(2,0.5)",
    "gbar(3,1)",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read '{path}': {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write '{path}': {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON in '{path}': {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Library(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Deviation,
    Defects,
    VerifyFundamental,
    Conjecture,
    Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "htype", version, about = "H-type deviation and horizontal calculus on step-two Carnot groups")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Catalog name such as `free(4)` or path to a group JSON file.
    #[arg(long)]
    pub group: Option<String>,
    /// `identity`, `optimal` or path to a metric JSON file.
    #[arg(long, default_value = "identity")]
    pub metric: String,
    #[arg(long)]
    pub solver_file: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_density: Option<usize>,
    /// Sample count for scans and point checks.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Family index: `3`, `2..4` (inclusive) or `2,3,5`.
    #[arg(long, default_value = "2..8")]
    pub n: String,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    Identity,
    Optimal,
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub command: Command,
    pub group: Option<String>,
    pub metric: MetricChoice,
    pub solver: SolverConfig,
    pub samples: usize,
    pub n: Vec<usize>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

/// Exit code and serialized report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub report: String,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

/// Parses `3`, `2..4` or `2,3,5`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Argument(format!("cannot parse n range '{s}'"));
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

impl RunSpec {
    pub fn from_args(args: &Args) -> Result<RunSpec, CliError> {
        let mut solver = match &args.solver_file {
            Some(p) => read_json::<SolverConfig>(p)?,
            None => SolverConfig::default(),
        };
        if let Some(v) = args.restarts {
            solver.restarts = v;
        }
        if let Some(v) = args.max_iters {
            solver.max_iters = v;
        }
        if let Some(v) = args.tol {
            solver.tol = v;
        }
        if let Some(v) = args.seed {
            solver.seed = v;
        }
        if let Some(v) = args.grid_density {
            solver.grid_density = v;
        }
        solver.validate()?;
        let metric = match args.metric.as_str() {
            "identity" => MetricChoice::Identity,
            "optimal" => MetricChoice::Optimal,
            path => MetricChoice::File(PathBuf::from(path)),
        };
        if args.threads == Some(0) {
            return Err(CliError::Argument("--threads must be positive".into()));
        }
        Ok(RunSpec {
            command: args.command,
            group: args.group.clone(),
            metric,
            solver,
            samples: args.samples,
            n: parse_range(&args.n)?,
            threads: args.threads,
            output: args.output.clone(),
            format: args.format,
        })
    }
}

/// Resolves a catalog name or a JSON file path.
pub fn resolve_group(name: &str) -> Result<StepTwoAlgebra, CliError> {
    let path = Path::new(name);
    if name.ends_with(".json") || path.is_file() {
        return read_json(path);
    }
    from_catalog_name(name).map_err(|e| match e {
        crate::Error::InvalidParameter(msg) if msg.starts_with("unknown group") => CliError::UnknownGroup(name.to_string()),
        other => CliError::Library(other),
    })
}

fn require_group(spec: &RunSpec) -> Result<StepTwoAlgebra, CliError> {
    let name = spec.group.as_deref().ok_or_else(|| CliError::Argument("--group is required".into()))?;
    resolve_group(name)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Argument(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Argument(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Argument(e.to_string()))
}

fn envelope(spec: &RunSpec, result: Value) -> String {
    let doc = json!({
        "command": spec.command,
        "version": VERSION,
        "seed": spec.solver.seed,
        "config": {
            "group": spec.group,
            "metric": spec.metric,
            "solver": spec.solver,
            "samples": spec.samples,
            "n": spec.n,
        },
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
    s.push('\n');
    s
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn render(spec: &RunSpec, result: Value, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String, CliError> {
    match spec.format {
        Format::Json => Ok(envelope(spec, result)),
        Format::Csv => csv_string(&header, &rows),
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

fn run_validate(spec: &RunSpec) -> Result<Outcome, CliError> {
    let alg = require_group(spec)?;
    let report = validate(&alg);
    let messages = report.messages();
    let result = json!({
        "valid": report.is_valid(),
        "m": alg.m(),
        "m2": alg.m2(),
        "homogeneous_dimension": alg.homogeneous_dimension(),
        "violations": messages,
    });
    let rows = messages.iter().map(|m| vec![m.clone()]).collect();
    let body = render(spec, result, cols(&["violation"]), rows)?;
    Ok(Outcome { code: if report.is_valid() { 0 } else { 1 }, report: body })
}

/// Validates the group; on failure the outcome carries exit code 1.
fn valid_group(spec: &RunSpec) -> Result<Result<StepTwoAlgebra, Outcome>, CliError> {
    let alg = require_group(spec)?;
    let report = validate(&alg);
    if report.is_valid() {
        return Ok(Ok(alg));
    }
    let result = json!({ "valid": false, "violations": report.messages() });
    let rows = report.messages().into_iter().map(|m| vec![m]).collect();
    Ok(Err(Outcome { code: 1, report: render(spec, result, cols(&["violation"]), rows)? }))
}

fn run_deviation(spec: &RunSpec) -> Result<Outcome, CliError> {
    let alg = match valid_group(spec)? {
        Ok(a) => a,
        Err(o) => return Ok(o),
    };
    let r = match &spec.metric {
        MetricChoice::Optimal => deviation(&alg, &spec.solver)?,
        other => deviation_at_metric(&alg, &fixed_metric(other, alg.m2())?, &spec.solver)?,
    };
    let identity = deviation_at_metric(&alg, &VerticalMetric::identity(alg.m2()), &spec.solver)?;
    let result = json!({
        "value": r.value,
        "report": r,
        "identity_metric_value": identity.value,
    });
    let m2 = alg.m2();
    let mut header = cols(&["value", "inner_converged", "outer_converged", "evaluations"]);
    header.extend(indexed("witness_t", m2));
    header.extend((0..m2 * m2).map(|k| format!("g_{}_{}", k / m2 + 1, k % m2 + 1)));
    let mut row = vec![num(r.value), r.inner_converged.to_string(), r.outer_converged.to_string(), r.evaluations.to_string()];
    row.extend(r.witness_t.iter().map(|v| num(*v)));
    row.extend(r.metric.g().transpose().iter().map(|v| num(*v)));
    Ok(Outcome { code: 0, report: render(spec, result, header, vec![row])? })
}

fn fixed_metric(choice: &MetricChoice, m2: usize) -> Result<VerticalMetric, CliError> {
    let metric = match choice {
        MetricChoice::Identity | MetricChoice::Optimal => VerticalMetric::identity(m2),
        MetricChoice::File(p) => read_json::<VerticalMetric>(p)?,
    };
    if metric.dim() != m2 {
        return Err(CliError::Library(crate::Error::Dimension { expected: m2, got: metric.dim() }));
    }
    Ok(metric)
}

fn run_defects(spec: &RunSpec) -> Result<Outcome, CliError> {
    let alg = match valid_group(spec)? {
        Ok(a) => a,
        Err(o) => return Ok(o),
    };
    let metric = match &spec.metric {
        MetricChoice::Optimal => deviation(&alg, &spec.solver)?.metric,
        other => fixed_metric(other, alg.m2())?,
    };
    let sups = DefectKind::ALL
        .iter()
        .map(|&k| sup_defect(&alg, &metric, k, &spec.solver))
        .collect::<crate::Result<Vec<_>>>()?;
    let scan = defect_scan(&alg, &metric, spec.samples, spec.solver.seed)?;
    let result = json!({
        "metric": metric,
        "sup": sups.iter().map(|s| json!({
            "kind": s.kind,
            "sup": s.sup,
            "witness": s.witness,
            "slice_radius": s.slice_radius,
            "interior": s.interior,
            "samples": s.samples,
        })).collect::<Vec<_>>(),
        "scan_samples": scan.len(),
        "scan_max": DefectKind::ALL.iter().map(|&k| (k.name(), scan.iter().map(|s| s.get(k).abs()).fold(0.0, f64::max))).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let mut header = cols(&["kind"]);
    header.extend(indexed("x", alg.m()));
    header.extend(indexed("t", alg.m2()));
    header.push("value".into());
    let mut rows = Vec::new();
    for kind in DefectKind::ALL {
        for s in &scan {
            let mut row = vec![kind.name().to_string()];
            row.extend(s.point.x.iter().chain(s.point.t.iter()).map(|v| num(*v)));
            row.push(num(s.get(kind)));
            rows.push(row);
        }
    }
    Ok(Outcome { code: 0, report: render(spec, result, header, rows)? })
}

fn run_verify(spec: &RunSpec) -> Result<Outcome, CliError> {
    let checks = spec.n.iter().map(|&n| verify_family(n, spec.samples, spec.solver.seed)).collect::<crate::Result<Vec<_>>>()?;
    let header = cols(&[
        "n",
        "points",
        "frame_identity",
        "pqr_identity",
        "harmonic",
        "fd_frame",
        "fd_grad_log_u",
        "fd_decomposition",
        "fd_divergence",
        "slice_grad_sq",
        "slice_linf_log_u",
        "slice_linf_n_over_n3",
    ]);
    let rows = checks
        .iter()
        .map(|c| {
            let mut r = vec![c.n.to_string(), c.points.to_string()];
            r.extend(
                [
                    c.frame_identity,
                    c.pqr_identity,
                    c.harmonic,
                    c.fd_frame,
                    c.fd_grad_log_u,
                    c.fd_decomposition,
                    c.fd_divergence,
                    c.slice_grad_sq,
                    c.slice_linf_log_u,
                    c.slice_linf_n_over_n3,
                ]
                .iter()
                .map(|v| num(*v)),
            );
            r
        })
        .collect();
    Ok(Outcome { code: 0, report: render(spec, to_value(&checks), header, rows)? })
}

fn run_conjecture(spec: &RunSpec) -> Result<Outcome, CliError> {
    let reports = spec.n.iter().map(|&n| anisotropic::conjecture_scan(n, &spec.solver)).collect::<crate::Result<Vec<_>>>()?;
    let header = cols(&["n", "sup", "delta_sq", "ratio", "witness_z1", "witness_zp", "witness_phi", "value_at_zprime"]);
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.n.to_string()];
            row.extend(
                [r.sup, r.delta_sq, r.ratio, r.witness.abs_z1(), r.witness.norm_zprime(), r.witness_phi, r.value_at_zprime]
                    .iter()
                    .map(|v| num(*v)),
            );
            row
        })
        .collect();
    Ok(Outcome { code: 0, report: render(spec, to_value(&reports), header, rows)? })
}

fn run_catalog(spec: &RunSpec) -> Result<Outcome, CliError> {
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for name in CATALOG {
        let alg = from_catalog_name(name)?;
        let valid = validate(&alg).is_valid();
        entries.push(json!({
            "name": name, "m": alg.m(), "m2": alg.m2(), "homogeneous_dimension": alg.homogeneous_dimension(), "valid": valid,
        }));
        rows.push(vec![
            name.to_string(),
            alg.m().to_string(),
            alg.m2().to_string(),
            alg.homogeneous_dimension().to_string(),
            valid.to_string(),
        ]);
    }
    Ok(Outcome { code: 0, report: render(spec, Value::Array(entries), cols(&["name", "m", "m2", "Q", "valid"]), rows)? })
}

/// Executes a run and writes the report to `--output` or returns it.
pub fn run(spec: &RunSpec) -> Result<Outcome, CliError> {
    let work = || match spec.command {
        Command::Validate => run_validate(spec),
        Command::Deviation => run_deviation(spec),
        Command::Defects => run_defects(spec),
        Command::VerifyFundamental => run_verify(spec),
        Command::Conjecture => run_conjecture(spec),
        Command::Catalog => run_catalog(spec),
    };
    let outcome = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Argument(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    if let Some(path) = &spec.output {
        fs::write(path, &outcome.report).map_err(|source| CliError::Write { path: path.clone(), source })?;
    }
    Ok(outcome)
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = RunSpec::from_args(&args).and_then(|spec| run(&spec).map(|o| (spec, o)));
    match result {
        Ok((spec, outcome)) => {
            if spec.output.is_none() {
                print!("{}", outcome.report);
            }
            if outcome.code != 0 {
                eprintln!("error: validation failed");
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
