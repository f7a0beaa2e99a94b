//! `hrgad generate|train|score|evaluate --config <file> [--set key=value]`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal
//! failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::dataio::{generate, load_jsonl, save_graphs, save_jsonl, split, DataError, Dataset, Split};
use crate::metrics::{evaluate, EvalReport, MetricError};
use crate::objective::ObjectiveError;
use crate::train::{fit, load_checkpoint, save_checkpoint, score_graphs, Checkpoint, CheckpointError, EpochRecord, TrainError, Workers};

pub use config::{load_config, resolve, ConfigFileError, Profile, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        use crate::layers::ModelError;
        match &e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Threads(_) | TrainError::Objective(ObjectiveError::Model(ModelError::Numerics(_))) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Train(t) => t.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, contents).map_err(io_error(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub path: PathBuf,
    pub graphs: usize,
    pub anomalous: usize,
}

pub fn cmd_generate(config: &RunConfig) -> Result<GenerateSummary, CliError> {
    let ds = generate(&config.generator)?;
    if let Some(parent) = config.dataset.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    save_jsonl(&ds, &config.dataset)?;
    Ok(GenerateSummary { path: config.dataset.clone(), graphs: ds.graphs.len(), anomalous: ds.anomalous_count() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Splits the dataset, trains with validation selection, and writes the
/// best checkpoint, the epoch log, and the test split into `out_dir`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary, CliError> {
    let ds = load_jsonl(&config.dataset)?;
    let s = &config.split;
    let ds: Dataset = split(&ds, s.train_frac, s.val_frac, s.seed)?;
    let (train, val, test) = (ds.subset_owned(Split::Train), ds.subset_owned(Split::Val), ds.subset(Split::Test));
    let result = fit(&ds.schema, &config.model, &train, &val, config.worker_threads())?;

    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(io_error(out))?;
    let ck_path = config.checkpoint_path();
    if let Some(parent) = ck_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    save_checkpoint(&Checkpoint::from_state(&result.best), &ck_path)?;
    let mut log = Vec::new();
    for rec in &result.log {
        serde_json::to_writer(&mut log, rec).map_err(|e| CliError::Internal(e.to_string()))?;
        log.push(b'\n');
    }
    write_file(&out.join("train_log.jsonl"), &log)?;
    save_graphs(&ds.schema, test.iter().copied(), &out.join("test.jsonl"))?;
    Ok(TrainSummary {
        checkpoint: ck_path,
        epochs_run: result.log.len(),
        best_epoch: result.best.epoch,
        train: train.len(),
        val: val.len(),
        test: test.len(),
    })
}

fn checked_dataset(path: &Path, ck: &Checkpoint) -> Result<Dataset, CliError> {
    let ds = load_jsonl(path)?;
    if ds.schema != ck.params.schema {
        return Err(CliError::Data(format!(
            "dataset schema {} does not match checkpoint schema {}",
            ds.schema, ck.params.schema
        )));
    }
    Ok(ds)
}

/// Writes one scored record per graph to `out_dir/scores.jsonl`, in
/// dataset order.
pub fn cmd_score(config: &RunConfig) -> Result<PathBuf, CliError> {
    let ck = load_checkpoint(&config.checkpoint_path())?;
    let ds = checked_dataset(&config.score_dataset_path(), &ck)?;
    let workers = Workers::new(config.worker_threads())?;
    let scored = score_graphs(&ck.params, &ck.svdd, ck.config.ssl_active(), &ds.graphs, &workers)?;
    let mut out = Vec::new();
    for s in &scored {
        serde_json::to_writer(&mut out, s).map_err(|e| CliError::Internal(e.to_string()))?;
        out.push(b'\n');
    }
    let path = config.out_dir.join("scores.jsonl");
    write_file(&path, &out)?;
    Ok(path)
}

fn mean_batch_seconds(log_path: &Path) -> Option<f64> {
    let text = fs::read_to_string(log_path).ok()?;
    let secs: Vec<f64> = text
        .lines()
        .filter_map(|l| serde_json::from_str::<EpochRecord>(l).ok())
        .map(|r| r.losses.batch_seconds)
        .collect();
    (!secs.is_empty()).then(|| secs.iter().sum::<f64>() / secs.len() as f64)
}

/// Scores a labeled dataset and writes `report.json` and `scores.csv`.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport, CliError> {
    let ck = load_checkpoint(&config.checkpoint_path())?;
    let ds = checked_dataset(&config.eval_dataset_path(), &ck)?;
    let workers = Workers::new(config.worker_threads())?;
    let batch_seconds = mean_batch_seconds(&config.out_dir.join("train_log.jsonl"));
    let report = evaluate(&ck.params, &ck.svdd, ck.config.ssl_active(), &ds.graphs, &workers, batch_seconds)?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&config.out_dir.join("report.json"), &json)?;
    write_file(&config.out_dir.join("scores.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

#[derive(Debug, Parser)]
#[command(name = "hrgad", version, about = "Graph-level anomaly detection on heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override one config key, e.g. `--set model.variant=HRGCN_SDR`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset to `dataset`.
    Generate(CommonArgs),
    /// Train and write the checkpoint, epoch log and test split.
    Train(CommonArgs),
    /// Score `score_dataset` (default `dataset`) with the checkpoint.
    Score(CommonArgs),
    /// Compute AUC/AP on `eval_dataset` (default the test split).
    Evaluate(CommonArgs),
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (args, which) = match &command {
        Command::Generate(a) => (a, "generate"),
        Command::Train(a) => (a, "train"),
        Command::Score(a) => (a, "score"),
        Command::Evaluate(a) => (a, "evaluate"),
    };
    let config = load_config(&args.config, &args.set)?;
    let out = |stdout: &mut dyn Write, line: String| writeln!(stdout, "{line}").map_err(|e| CliError::Internal(e.to_string()));
    match which {
        "generate" => {
            let s = cmd_generate(&config)?;
            out(stdout, format!("generated {} graphs, {} anomalous -> {}", s.graphs, s.anomalous, s.path.display()))
        }
        "train" => {
            let s = cmd_train(&config)?;
            out(
                stdout,
                format!(
                    "trained {} epochs (best {}), train {} / val {} / test {} graphs -> {}",
                    s.epochs_run,
                    s.best_epoch,
                    s.train,
                    s.val,
                    s.test,
                    s.checkpoint.display()
                ),
            )
        }
        "score" => {
            let p = cmd_score(&config)?;
            out(stdout, format!("scores -> {}", p.display()))
        }
        _ => {
            let r = cmd_evaluate(&config)?;
            out(stdout, format!("auc {:.6} ap {:.6} over {} graphs ({} anomalous)", r.auc, r.ap, r.graph_count, r.anomalous_count))
        }
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 1;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
