//! Command-line driver: `fit`, `select`, `generate` and `project`.
//!
//! Every output embeds the toolkit version and the effective configuration.
//! JSON documents carry them inline; CSV outputs get a `<file>.meta.json`
//! sidecar. Failures print one JSON error record on stderr and exit with
//! 2 (usage), 3 (numerical) or 4 (I/O).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    builtin, export_projection, load_delimited, standardize, Dataset, LoadOptions, Provenance,
};
use crate::ecm::{fit, sample_mixture, FitConfig, FitResult, MjghdModel, ModelDocument, StartSummary};
use crate::metrics::{adjusted_rand_index, cross_tabulate};
use crate::select::{grid_search, ModelGrid, ReportRecord, SearchMode};
use crate::Error;

pub const TOOLKIT: &str = "mjghd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mjghd", version, about = "Clustering with mixtures of joint generalized hyperbolic distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one (G, q) configuration.
    Fit(FitArgs),
    /// Fit a grid of configurations and rank them by BIC.
    Select(SelectArgs),
    /// Draw a labelled sample from a model document.
    Generate(GenerateArgs),
    /// Export rotated coordinates of a fitted component for plotting.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Delimited file, or a bundled dataset name (`wine`, `tumour`).
    #[arg(long)]
    data: String,
    /// Name of the label column (index when `--no-header`).
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    no_header: bool,
    /// Center and scale every column to unit sample variance.
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Args)]
struct FitOptions {
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative log-likelihood tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// JSON file with `FitConfig` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for random starts. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "G")]
    g: usize,
    /// Subspace dimension of every component, e.g. `8,5,3`.
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<usize>,
    #[command(flatten)]
    options: FitOptions,
    /// Fit document path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Component counts, e.g. `1,2,3,4`.
    #[arg(long = "G", value_delimiter = ',', required = true)]
    g: Vec<usize>,
    /// Candidate subspace dimensions, e.g. `2,3,5,8,10`.
    #[arg(long, value_delimiter = ',', required = true)]
    q_grid: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    max_configs: usize,
    /// Use one q for all components instead of every multiset.
    #[arg(long)]
    common_q: bool,
    #[command(flatten)]
    options: FitOptions,
    /// Ranked report path (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fit document of the BIC-best configuration.
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Model document, or a fit document containing one.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV output; `<out>.meta.json` is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Fit document written by `fit` or `select --out-model`.
    #[arg(long)]
    fit: PathBuf,
    /// Data to project (defaults to the data recorded in the fit document).
    #[arg(long)]
    data: Option<String>,
    /// Label column (defaults to the one recorded in the fit document).
    #[arg(long)]
    labels: Option<String>,
    /// One-based component index.
    #[arg(long, default_value_t = 1)]
    component: usize,
    #[arg(long, default_value_t = 3)]
    dims: usize,
    /// CSV output; `<out>.meta.json` is written next to it.
    #[arg(long)]
    out: PathBuf,
}

/// How the data were read, as recorded in outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub source: String,
    pub label_column: Option<String>,
    pub delimiter: char,
    pub header: bool,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRunConfig {
    pub data: DataSpec,
    pub g: usize,
    pub q: Vec<usize>,
    pub fit: FitConfig,
}

/// Agreement with known labels. Predicted components are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ari: f64,
    pub classes: Vec<String>,
    pub components: Vec<usize>,
    pub contingency: Vec<Vec<u64>>,
    pub misclassified: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMetrics {
    pub loglik: f64,
    pub bic: f64,
    pub n_params: usize,
    pub converged: bool,
    pub n_iterations: usize,
    pub best_start: usize,
    pub loglik_trace: Vec<f64>,
    pub starts: Vec<StartSummary>,
}

/// Output of `fit`, also written by `select --out-model`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub toolkit: String,
    pub version: String,
    pub config: FitRunConfig,
    pub data: Provenance,
    pub n: usize,
    pub p: usize,
    pub model: ModelDocument,
    pub metrics: FitMetrics,
    /// One-based component of each observation.
    pub hard_labels: Vec<usize>,
    #[serde(with = "crate::jghd::row_major")]
    pub zhat: DMatrix<f64>,
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRunConfig {
    pub data: DataSpec,
    pub grid: ModelGrid,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectReport {
    pub toolkit: String,
    pub version: String,
    pub config: SelectRunConfig,
    pub data: Provenance,
    /// Best BIC first; the first record is the selected model.
    pub records: Vec<ReportRecord>,
    pub failures: Vec<crate::select::GridFailure>,
}

/// Sidecar written next to every CSV output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvMeta {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Run(Error::InvalidParameter(_) | Error::Dimension(_)) => EXIT_USAGE,
            CliError::Run(_) => EXIT_IO,
        }
    }

    fn record(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Run(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({
            "error": { "kind": kind, "message": message, "exit_code": self.exit_code() }
        })
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Project(a) => cmd_project(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

fn data_spec(a: &DataArgs) -> DataSpec {
    let label_column = a
        .labels
        .clone()
        .or_else(|| builtin_for(&a.data).map(|b| b.label_column.to_string()));
    DataSpec {
        source: a.data.clone(),
        label_column,
        delimiter: a.delimiter,
        header: !a.no_header,
        standardize: a.standardize,
    }
}

/// A bundled dataset, unless `source` names an existing file.
fn builtin_for(source: &str) -> Option<crate::dataio::Builtin> {
    if Path::new(source).is_file() {
        None
    } else {
        builtin(source)
    }
}

fn load(spec: &DataSpec) -> Result<Dataset, CliError> {
    if !spec.delimiter.is_ascii() {
        return Err(CliError::Usage("the delimiter must be a single ASCII character".into()));
    }
    let path = builtin_for(&spec.source).map_or_else(|| PathBuf::from(&spec.source), |b| b.path);
    let options = LoadOptions {
        delimiter: spec.delimiter as u8,
        header: spec.header,
        label_column: spec.label_column.clone(),
    };
    let mut ds = load_delimited(&path, &options)?;
    ds.provenance.source = spec.source.clone();
    if ds.n() == 0 {
        return Err(Error::Data("no complete rows".into()).into());
    }
    if spec.standardize {
        ds = standardize(&ds)?;
    }
    Ok(ds)
}

fn fit_config(o: &FitOptions) -> Result<FitConfig, CliError> {
    let mut config = match &o.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path).map_err(Error::from)?).map_err(Error::from)?,
        None => FitConfig::default(),
    };
    if let Some(v) = o.starts {
        config.n_starts = v;
    }
    if let Some(v) = o.seed {
        config.seed = v;
    }
    if let Some(v) = o.max_iter {
        config.max_iterations = v;
    }
    if let Some(v) = o.tol {
        config.loglik_rel_tol = v;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if o.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(config)
}

/// Runs `f` on a pool of `workers` threads (the global pool when `None`).
fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match workers {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {k} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(Error::from)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_sidecar<C: Serialize>(out: &Path, command: &str, config: &C) -> Result<(), CliError> {
    let meta = CsvMeta {
        toolkit: TOOLKIT.into(),
        version: VERSION.into(),
        command: command.into(),
        config: serde_json::to_value(config).map_err(Error::from)?,
    };
    write_json(&meta, Some(&sidecar_path(out)))
}

fn evaluate(truth: &[String], hard: &[usize]) -> Result<Evaluation, CliError> {
    let predicted: Vec<usize> = hard.iter().map(|g| g + 1).collect();
    let table = cross_tabulate(truth, &predicted)?;
    Ok(Evaluation {
        ari: adjusted_rand_index(truth, &predicted)?,
        misclassified: table.misclassified(),
        classes: table.rows,
        components: table.cols,
        contingency: table.counts,
    })
}

fn fit_document(config: FitRunConfig, ds: &Dataset, result: &FitResult) -> Result<FitDocument, CliError> {
    let evaluation = match &ds.labels {
        Some(truth) => Some(evaluate(truth, &result.hard_labels)?),
        None => None,
    };
    Ok(FitDocument {
        toolkit: TOOLKIT.into(),
        version: VERSION.into(),
        config,
        data: ds.provenance.clone(),
        n: ds.n(),
        p: ds.p(),
        model: ModelDocument::from(&result.model),
        metrics: FitMetrics {
            loglik: result.loglik,
            bic: result.bic,
            n_params: result.n_params,
            converged: result.converged,
            n_iterations: result.n_iterations,
            best_start: result.best_start,
            loglik_trace: result.loglik_trace.clone(),
            starts: result.starts.clone(),
        },
        hard_labels: result.hard_labels.iter().map(|g| g + 1).collect(),
        zhat: result.zhat.clone(),
        evaluation,
    })
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    if a.g == 0 {
        return Err(CliError::Usage("--G must be at least 1".into()));
    }
    if a.q.len() != a.g {
        return Err(CliError::Usage(format!("--q lists {} dimensions for G = {}", a.q.len(), a.g)));
    }
    let config = fit_config(&a.options)?;
    let spec = data_spec(&a.data);
    let ds = load(&spec)?;
    if let Some(&bad) = a.q.iter().find(|&&q| q == 0 || q >= ds.p()) {
        return Err(CliError::Usage(format!("q = {bad} must lie in 1..{}", ds.p())));
    }
    let result = with_workers(a.options.workers, || fit(&ds.matrix, a.g, &a.q, &config))??;
    let run = FitRunConfig {
        data: spec,
        g: a.g,
        q: a.q.clone(),
        fit: config,
    };
    let doc = fit_document(run, &ds, &result)?;
    write_json(&doc, a.out.as_deref())?;
    if !result.converged {
        eprintln!(
            "warning: best start stopped at the iteration limit ({} iterations)",
            result.n_iterations
        );
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> Result<(), CliError> {
    let config = fit_config(&a.options)?;
    let spec = data_spec(&a.data);
    let ds = load(&spec)?;
    let grid = ModelGrid {
        g_values: a.g.clone(),
        q_candidates: a.q_grid.clone(),
        max_configs: a.max_configs,
        search_mode: if a.common_q {
            SearchMode::CommonQ
        } else {
            SearchMode::ExhaustiveTuples
        },
    };
    grid.validate(ds.p()).map_err(|e| CliError::Usage(e.to_string()))?;
    let search = with_workers(a.options.workers, || grid_search(&ds.matrix, &grid, &config))??;
    let records = search.records(ds.labels.as_deref())?;
    let run = SelectRunConfig {
        data: spec.clone(),
        grid,
        fit: config.clone(),
    };
    if let Some(path) = &a.out_model {
        let best = &search.ranked[0];
        let fit_run = FitRunConfig {
            data: spec,
            g: best.g,
            q: best.q.clone(),
            fit: config,
        };
        write_json(&fit_document(fit_run, &ds, &best.fit)?, Some(path))?;
    }
    let report = SelectReport {
        toolkit: TOOLKIT.into(),
        version: VERSION.into(),
        config: run,
        data: ds.provenance.clone(),
        records,
        failures: search.failures,
    };
    write_json(&report, a.report.as_deref())
}

/// Reads a model document, or the `model` member of a fit document.
fn read_model(path: &Path) -> Result<MjghdModel, CliError> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    if let Some(inner) = value.get_mut("model") {
        value = inner.take();
    }
    let doc: ModelDocument = serde_json::from_value(value).map_err(Error::from)?;
    Ok(MjghdModel::try_from(doc)?)
}

#[derive(Debug, Serialize)]
struct GenerateConfig<'a> {
    model: &'a Path,
    n: usize,
    seed: u64,
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let model = read_model(&a.model)?;
    let (x, labels) = sample_mixture(&model, a.n, a.seed)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(Error::from)?;
    let mut header: Vec<String> = (1..=model.p()).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(Error::from)?;
    for (i, g) in labels.iter().enumerate() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push((g + 1).to_string());
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    let config = GenerateConfig {
        model: &a.model,
        n: a.n,
        seed: a.seed,
    };
    write_sidecar(&a.out, "generate", &config)
}

#[derive(Debug, Serialize)]
struct ProjectConfig<'a> {
    fit: &'a Path,
    data: &'a DataSpec,
    component: usize,
    dims: usize,
}

fn cmd_project(a: ProjectArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.fit).map_err(Error::from)?;
    let doc: FitDocument = serde_json::from_str(&text).map_err(Error::from)?;
    let mut spec = doc.config.data.clone();
    if let Some(source) = &a.data {
        spec.source = source.clone();
    }
    if a.labels.is_some() {
        spec.label_column = a.labels.clone();
    }
    let ds = load(&spec)?;
    if a.component == 0 || a.component > doc.model.components.len() {
        return Err(CliError::Usage(format!(
            "--component must lie in 1..={}",
            doc.model.components.len()
        )));
    }
    let model = MjghdModel::try_from(doc.model)?;
    let result = FitResult {
        n_params: doc.metrics.n_params,
        bic: doc.metrics.bic,
        model,
        zhat: doc.zhat,
        loglik_trace: doc.metrics.loglik_trace,
        loglik: doc.metrics.loglik,
        converged: doc.metrics.converged,
        n_iterations: doc.metrics.n_iterations,
        hard_labels: doc.hard_labels.iter().map(|g| g.saturating_sub(1)).collect(),
        best_start: doc.metrics.best_start,
        starts: doc.metrics.starts,
    };
    let table = export_projection(&result, &ds, a.component - 1, a.dims)?;
    let file = fs::File::create(&a.out).map_err(Error::from)?;
    table.write_csv(file)?;
    let config = ProjectConfig {
        fit: &a.fit,
        data: &spec,
        component: a.component,
        dims: a.dims,
    };
    write_sidecar(&a.out, "project", &config)
}
