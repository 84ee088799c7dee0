//! The `faceage` command line.
//!
//! Exit codes: 0 success, 2 I/O or parse failure (including unreadable
//! images and checkpoints, malformed manifests and task/spec mismatches),
//! 3 empty result, 4 invalid arguments, 5 training divergence, 6 every grid
//! cell failed.
//!
//! Commands that take a `--config` JSON file start from the built-in
//! defaults, apply the file, then apply explicit flags. The resulting
//! effective configuration is printed to stderr and written next to the
//! command's main output as `<stem>.config.json`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{
    filter_invalid_gender, generate_synthetic, holdout_split, ingest_directory, load_image,
    normalize, rebalance_age, Manifest, Rebalance,
};
use crate::error::{Error, Result};
use crate::metrics::{argmax, evaluate};
use crate::model::{forward, ModelSpec, Task};
use crate::train::{
    default_grid, grid_search, load_checkpoint, save_checkpoint, train_with, Checkpoint,
    TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_ARGS: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;
pub const EXIT_EXHAUSTED: i32 = 6;

#[derive(Parser, Debug)]
#[command(name = "faceage", version, about = "Age and gender CNNs for UTKFace-style image folders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic image set with labels planted in the pixels
    Synth(SynthArgs),
    /// Ingest a folder, drop invalid gender codes, rebalance the 1-4 age group
    Prepare(PrepareArgs),
    /// Seeded holdout split of a manifest
    Split(SplitArgs),
    /// Train a model and write a checkpoint plus per-epoch log
    Train(TrainArgs),
    /// Score a checkpoint on a manifest
    Evaluate(EvaluateArgs),
    /// Predict age and gender for one image
    Predict(PredictArgs),
    /// Train every configuration of a grid and report the best
    Gridsearch(GridArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the generated records as a manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub keep_frac: Option<f64>,
    #[arg(long)]
    pub age_low: Option<u32>,
    #[arg(long)]
    pub age_high: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flags that override fields of a [`TrainConfig`].
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image-decoding threads; 1 is the strict deterministic mode
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// `default` or a model spec JSON file
    #[arg(long, default_value = "default")]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV; defaults to `<out stem>.log.csv`
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub age_checkpoint: PathBuf,
    #[arg(long)]
    pub gender_checkpoint: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub task: Task,
    /// JSON array of partial training configurations; defaults to
    /// lr {1e-2, 1e-3, 1e-4} × batch {32, 64}
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, default_value = "default")]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the winning model here
    #[arg(long)]
    pub best_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub keep_frac: f64,
    pub age_low: u32,
    pub age_high: u32,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        let r = Rebalance::default();
        PrepareConfig {
            keep_frac: r.keep_frac,
            age_low: r.low_age,
            age_high: r.high_age,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.7,
            seed: 0,
        }
    }
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn fail<T>(code: i32, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        message: message.into(),
    })
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) => EXIT_ARGS,
        Error::TrainingDiverged { .. } => EXIT_DIVERGED,
        Error::SearchExhausted(_) => EXIT_EXHAUSTED,
        Error::Dimension(_)
        | Error::Contract(_)
        | Error::MalformedName { .. }
        | Error::ImageDecode { .. }
        | Error::Checkpoint(_)
        | Error::Io { .. }
        | Error::Json { .. } => EXIT_IO,
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Output goes to stdout, diagnostics to
/// stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ARGS } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Synth(a) => synth(a, out),
        Command::Prepare(a) => prepare(a, out),
        Command::Split(a) => split(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Gridsearch(a) => gridsearch(a, out),
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), Failure> {
    out.write_all(text.as_ref().as_bytes())
        .map_err(|e| Failure::from(Error::io("<stdout>", e)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::from(Error::io(path, e)))
}

/// `dir/stem.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn record_config(output: &Path, command: &str, config: serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&json!({ "command": command, "config": config }))
        .expect("config serializes");
    eprintln!("effective config: {}", serde_json::to_string(&config).unwrap());
    write_file(&sibling(output, "config.json"), &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::io(path, e)))?;
    serde_json::from_str(&text).map_err(|e| Failure::from(Error::json(path, e)))
}

fn load_manifest(path: &Path) -> Result<Manifest, Failure> {
    Ok(Manifest::load(path)?)
}

fn load_spec(arg: &str, task: Task) -> Result<ModelSpec, Failure> {
    let spec = if arg == "default" {
        ModelSpec::default_for(task)
    } else {
        ModelSpec::load(Path::new(arg))?
    };
    if spec.task() != task {
        return fail(
            EXIT_IO,
            format!("model spec {arg} is for {} but --task is {task}", spec.task()),
        );
    }
    Ok(spec)
}

fn train_config(flags: &TrainFlags) -> Result<TrainConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { cfg.$f = v; } )* };
    }
    apply!(learning_rate, beta1, beta2, epsilon, max_epochs, batch_size, seed, threads);
    cfg.validate()?;
    Ok(cfg)
}

fn histogram(out: &mut dyn Write, m: &Manifest) -> Result<(), Failure> {
    let width = |c: usize| "#".repeat(c.div_ceil((m.len() / 40).max(1)));
    say(out, "  age\n")?;
    for (lo, c) in m.age_histogram() {
        say(out, format!("  {:>3}-{:<3} {:>6} {}\n", lo, lo + 9, c, width(c)))?;
    }
    say(out, "  gender\n")?;
    for (g, c) in m.gender_counts() {
        say(out, format!("  {g:>7} {c:>6} {}\n", width(c)))?;
    }
    Ok(())
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let m = generate_synthetic(a.seed, a.n, &a.out_dir)?;
    if let Some(path) = &a.manifest {
        m.save(path)?;
        record_config(path, "synth", json!({ "n": a.n, "seed": a.seed, "out_dir": a.out_dir }))?;
    }
    say(out, format!("wrote {} images to {}\n", m.len(), a.out_dir.display()))
}

fn prepare(a: PrepareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg: PrepareConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PrepareConfig::default(),
    };
    if let Some(v) = a.keep_frac {
        cfg.keep_frac = v;
    }
    if let Some(v) = a.age_low {
        cfg.age_low = v;
    }
    if let Some(v) = a.age_high {
        cfg.age_high = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let params = Rebalance {
        low_age: cfg.age_low,
        high_age: cfg.age_high,
        keep_frac: cfg.keep_frac,
    };
    params.validate()?;

    let m = ingest_directory(&a.input_dir)?;
    let m = filter_invalid_gender(m);
    let m = rebalance_age(m, params, cfg.seed)?;
    for s in &m.steps {
        say(out, format!("{:<14} {:>6} -> {:>6}\n", s.name, s.in_count, s.out_count))?;
    }
    if m.is_empty() {
        return fail(EXIT_EMPTY, "no records left after preparation");
    }
    histogram(out, &m)?;
    m.save(&a.out)?;
    record_config(&a.out, "prepare", json!({ "input_dir": a.input_dir, "prepare": cfg }))?;
    Ok(())
}

fn split(a: SplitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg: SplitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SplitConfig::default(),
    };
    if let Some(v) = a.train_frac {
        cfg.train_frac = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let m = load_manifest(&a.manifest)?;
    let (train, test) = holdout_split(&m, cfg.train_frac, cfg.seed)?;
    if train.is_empty() || test.is_empty() {
        return fail(
            EXIT_ARGS,
            format!(
                "train fraction {} on {} records gives {}/{}; both parts must be non-empty",
                cfg.train_frac,
                m.len(),
                train.len(),
                test.len()
            ),
        );
    }
    train.save(&a.out_train)?;
    test.save(&a.out_test)?;
    record_config(&a.out_train, "split", json!({ "manifest": a.manifest, "split": cfg }))?;
    say(out, format!("train {}  test {}\n", train.len(), test.len()))
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = train_config(&a.flags)?;
    let spec = load_spec(&a.spec, a.task)?;
    let train_m = load_manifest(&a.train)?;
    let val_m = load_manifest(&a.val)?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.csv"));
    record_config(&a.out, "train", json!({ "task": a.task, "spec": spec, "train": cfg }))?;

    let (params, log) = train_with(a.task, &spec, &train_m, &val_m, &cfg, None, |row| {
        eprintln!(
            "epoch {:>4}  loss {:.6}  val {:.4}  {:.1}s",
            row.epoch, row.train_loss, row.val_metric, row.seconds
        );
    })?;
    let ckpt = Checkpoint {
        spec,
        params,
        config: cfg.clone(),
        epoch: cfg.max_epochs,
        seed: train_m.seed,
    };
    save_checkpoint(&ckpt, &a.out)?;
    log.save(&log_path)?;
    let last = log.last().expect("at least one epoch");
    let name = match a.task {
        Task::Age => "rmse",
        Task::Gender => "accuracy",
    };
    say(out, format!("final validation {name} {:.4}\n", last.val_metric))
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.threads == 0 {
        return fail(EXIT_ARGS, "--threads must be at least 1");
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let m = load_manifest(&a.manifest)?;
    let report = evaluate(a.task, &ckpt, &m, a.threads)?;
    report.save(&a.report)?;
    write_file(&sibling(&a.report, "txt"), &report.text)?;
    if let Some(roc) = &report.roc {
        write_file(&sibling(&a.report, "roc.csv"), &roc.to_csv())?;
    }
    record_config(
        &a.report,
        "evaluate",
        json!({ "task": a.task, "checkpoint": a.checkpoint, "manifest": a.manifest }),
    )?;
    say(out, &report.text)
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let age = load_checkpoint(&a.age_checkpoint)?;
    let gender = load_checkpoint(&a.gender_checkpoint)?;
    for (ckpt, want, path) in [(&age, Task::Age, &a.age_checkpoint), (&gender, Task::Gender, &a.gender_checkpoint)] {
        if ckpt.task() != want {
            return fail(
                EXIT_IO,
                format!("{} holds a {} model, expected {want}", path.display(), ckpt.task()),
            );
        }
    }
    let x = normalize(&load_image(&a.image)?);
    let batch = x.reshape(&[1, 3, crate::data::IMAGE_SIZE, crate::data::IMAGE_SIZE])?;
    let years = forward(&age.spec, &age.params, &batch)?.data()[0];
    let probs = forward(&gender.spec, &gender.params, &batch)?;
    let class = argmax(probs.data());
    say(
        out,
        format!("age {:.1}, gender {class}, p {:.3}\n", years, probs.data()[class]),
    )
}

fn gridsearch(a: GridArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let base = train_config(&a.flags)?;
    let grid: Vec<TrainConfig> = match &a.grid {
        Some(path) => {
            let cells: Vec<serde_json::Value> = read_json(path)?;
            if cells.is_empty() {
                return fail(EXIT_ARGS, format!("{} holds no configurations", path.display()));
            }
            let base_json = serde_json::to_value(&base).expect("config serializes");
            cells
                .into_iter()
                .map(|cell| {
                    let mut merged = base_json.clone();
                    if let (Some(m), serde_json::Value::Object(c)) = (merged.as_object_mut(), cell) {
                        m.extend(c);
                    }
                    serde_json::from_value(merged).map_err(|e| Failure::from(Error::json(path, e)))
                })
                .collect::<Result<_, _>>()?
        }
        None => default_grid(&base),
    };
    let spec = load_spec(&a.spec, a.task)?;
    let train_m = load_manifest(&a.train)?;
    let val_m = load_manifest(&a.val)?;
    record_config(&a.out, "gridsearch", json!({ "task": a.task, "spec": spec, "grid": grid }))?;

    let result = grid_search(a.task, &spec, &train_m, &val_m, &grid)?;
    write_file(&a.out, &result.to_csv())?;
    if let Some(path) = &a.best_checkpoint {
        save_checkpoint(
            &Checkpoint {
                spec: spec.clone(),
                params: result.best_params.clone(),
                config: result.best.clone(),
                epoch: result.best.max_epochs,
                seed: train_m.seed,
            },
            path,
        )?;
    }
    say(
        out,
        format!(
            "best cell {}: {}\n",
            result.best_index,
            serde_json::to_string(&result.best).expect("config serializes")
        ),
    )
}
