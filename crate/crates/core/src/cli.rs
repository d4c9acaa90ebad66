//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{hierarchy_audit, AuditOptions, DEFAULT_MAX_EXHAUSTIVE_DIM, DEFAULT_TOL};
use crate::data::{read_libsvm, read_libsvm_pair, to_libsvm, ParseOptions, Task};
use crate::encode::{encode_fields, read_field_csv, FieldSchema};
use crate::error::{Error, Result};
use crate::ftrl::HyperParams;
use crate::grid::{grid_search, Grid};
use crate::metrics::{argmax, evaluate, predict_all};
use crate::model::{FactorizedModel, ModelKind};
use crate::model_io::{load_model, save_model};
use crate::synth::{generate, SynthConfig};
use crate::trainer::{train_full, write_trace_csv, EvalCadence, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "shfm", version, about = "Sparse hierarchical factorization machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Score a dataset with a saved model.
    Predict(PredictArgs),
    /// Report loss, metrics and sparsity of a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Train every point of a hyperparameter grid and rank the results.
    GridSearch(GridArgs),
    /// Check the hierarchy assumptions of a saved model.
    Audit(AuditArgs),
    /// Write the planted-hierarchy benchmark as libsvm files.
    Synth(SynthArgs),
    /// Turn a field-oriented CSV into one-hot libsvm data.
    Encode(EncodeArgs),
}

#[derive(Args, Debug)]
struct Hyper {
    #[arg(long, default_value_t = ModelKind::Shfm)]
    model: ModelKind,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.001)]
    l1: f64,
    #[arg(long, default_value_t = 0.1)]
    l2: f64,
    #[arg(long, default_value_t = 0.01)]
    init_sigma: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep the sample order fixed instead of reshuffling each epoch.
    #[arg(long)]
    no_shuffle: bool,
    /// Evaluate every N batches instead of once per epoch.
    #[arg(long, value_name = "N")]
    eval_every: Option<usize>,
}

impl Hyper {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.model,
            rank: self.k,
            epochs: self.epochs,
            batch_size: self.batch_size,
            hp: HyperParams {
                alpha: self.alpha,
                mu: self.mu,
                gamma: self.gamma,
                lambda1: self.l1,
                lambda2: self.l2,
                init_sigma: self.init_sigma,
                seed: self.seed,
            },
            shuffle: !self.no_shuffle,
            eval: self.eval_every.map_or(EvalCadence::Epochs(1), EvalCadence::Batches),
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = Task::Regression)]
    task: Task,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also store the optimizer accumulators in the model file.
    #[arg(long)]
    save_state: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the report as one key=value line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, alias = "valid")]
    test: PathBuf,
    #[arg(long, default_value_t = Task::Regression)]
    task: Task,
    /// key=v1,v2 lines; without it the default l1 x k grid is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    /// Directory for one trace CSV per grid point and a ranking summary.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Where to save the best model.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also scan every feature pair.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_EXHAUSTIVE_DIM)]
    max_dim: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
    #[arg(long, default_value_t = Task::Regression)]
    task: Task,
    /// Quantile classes for classification.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 2_000)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 2_000)]
    test_samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    label: String,
    /// Comma-separated columns to keep as real values.
    #[arg(long, value_delimiter = ',')]
    numeric: Vec<String>,
    #[arg(long, default_value_t = Task::Classification)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            let _ = writeln!(err, "shfm: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    if let Err(msg) = configure_threads() {
        let _ = writeln!(err, "shfm: {msg}");
        return 1;
    }
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "shfm: {msg}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("SHFM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SHFM_THREADS must be a positive integer, got '{raw}'"))?;
    // A pool built earlier in this process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::GridSearch(a) => cmd_grid(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Encode(a) => cmd_encode(a, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_for_model(model: &FactorizedModel, data: &Path) -> Result<crate::data::Dataset> {
    let opts = ParseOptions {
        task: model.task(),
        dim: Some(model.dim()),
        classes: (model.task() == Task::Classification).then_some(model.classes()),
    };
    read_libsvm(data, &opts)
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = a.hyper.config();
    config.validate()?;
    let opts = ParseOptions::new(a.task);
    let (train_set, test_set) = match &a.test {
        Some(t) => {
            let (tr, te) = read_libsvm_pair(&a.train, t, &opts)?;
            (tr, Some(te))
        }
        None => (read_libsvm(&a.train, &opts)?, None),
    };
    let outcome = train_full(&train_set, test_set.as_ref(), &config)?;
    save_model(&a.out, &outcome.model, a.save_state.then_some(&outcome.state))?;
    if let Some(path) = &a.trace {
        let mut w = create(path)?;
        write_trace_csv(&mut w, a.task, &outcome.trace)?;
        w.flush()?;
    }
    if let Some(last) = outcome.trace.last() {
        match &last.test {
            Some(r) => writeln!(out, "epoch={} {}", last.epoch, r.to_kv_line())?,
            None => writeln!(
                out,
                "epoch={} train_loss={} sparsity={}",
                last.epoch, last.train_loss, last.sparsity.element
            )?,
        }
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let data = load_for_model(&model, &a.data)?;
    let scores = predict_all(&model, &data)?;
    let mut text = String::new();
    for s in &scores {
        match model.task() {
            Task::Regression => text.push_str(&format!("{}\n", s[0])),
            Task::Classification => {
                text.push_str(&argmax(s).to_string());
                for v in s {
                    text.push_str(&format!(" {v}"));
                }
                text.push('\n');
            }
        }
    }
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let data = load_for_model(&model, &a.data)?;
    let report = evaluate(&model, &data)?;
    write!(out, "{report}")?;
    if let Some(p) = &a.out {
        fs::write(p, format!("{}\n", report.to_kv_line()))?;
    }
    Ok(())
}

fn cmd_grid(a: GridArgs, out: &mut dyn Write) -> Result<()> {
    let base = a.hyper.config();
    let grid = match &a.config {
        Some(p) => Grid::parse(&fs::read_to_string(p)?)?,
        None => Grid::default_grid(),
    };
    let (train_set, valid) = read_libsvm_pair(&a.train, &a.test, &ParseOptions::new(a.task))?;
    let results = grid_search(&train_set, &valid, &grid, &base)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        for r in &results {
            let mut w = create(&dir.join(format!("trace_{}.csv", r.point.label())))?;
            write_trace_csv(&mut w, a.task, &r.trace)?;
            w.flush()?;
        }
    }
    let mut summary = String::new();
    for (rank, r) in results.iter().enumerate() {
        summary.push_str(&format!("rank={} {} {}\n", rank + 1, r.point, r.report.to_kv_line()));
    }
    out.write_all(summary.as_bytes())?;
    if let Some(dir) = &a.out_dir {
        fs::write(dir.join("ranking.txt"), &summary)?;
    }
    if let (Some(p), Some(best)) = (&a.out, results.first()) {
        save_model(p, &best.model, None)?;
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    if !(a.tol >= 0.0 && a.tol.is_finite()) {
        return Err(Error::argument("tolerance must be a nonnegative real"));
    }
    let opts = AuditOptions {
        tol: a.tol,
        exhaustive: a.exhaustive,
        max_exhaustive_dim: a.max_dim,
    };
    let report = hierarchy_audit(&model, &opts)?;
    write!(out, "{report} assumptions_hold={}", report.assumptions_hold())?;
    if let Some(f) = report.violation_fraction() {
        write!(out, " violation_fraction={f}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        dim: a.dim,
        samples: a.samples,
        test_samples: a.test_samples,
        task: a.task,
        classes: if a.task == Task::Classification { a.classes } else { 1 },
        seed: a.seed,
        ..SynthConfig::default()
    };
    let s = generate(&cfg)?;
    fs::write(&a.out_train, to_libsvm(&s.train))?;
    fs::write(&a.out_test, to_libsvm(&s.test))?;
    let active: Vec<String> = s.active.iter().map(|i| i.to_string()).collect();
    writeln!(out, "active={}", active.join(","))?;
    Ok(())
}

fn cmd_encode(a: EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_field_csv(File::open(&a.csv)?, &a.label)?;
    let numeric: Vec<&str> = a.numeric.iter().map(String::as_str).collect();
    let schema = FieldSchema::fit(&records, &numeric)?;
    let data = encode_fields(&records, &schema, a.task)?;
    fs::write(&a.out, to_libsvm(&data))?;
    writeln!(out, "samples={} d={}", data.len(), data.dim())?;
    Ok(())
}
