//! `depthsign` command line: synthetic data generation, per-subject
//! training, evaluation reports, prediction and plot-data emission.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical
//! divergence during training.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

use crate::autoencoder::AeHyper;
use crate::classifier::SoftmaxHyper;
use crate::data::{
    self, load_dataset, one_hot, split_dataset, synth_gestures, Dataset, Manifest, ManifestRecord,
    Partition, Split, DEFAULT_FRACTIONS,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngState};
use crate::metrics::{self, EvalReport, MetricRow, SubjectResult};
use crate::stack::{self, greedy_train, ModelBundle, PipelineConfig, StackedNetwork};

pub const SEED_ENV: &str = "DEPTHSIGN_SEED";

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_USAGE,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubjectSelection {
    All,
    Only(Vec<u32>),
}

/// Everything a training run depends on. Serialized as `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub split: [f64; 3],
    pub subjects: SubjectSelection,
    pub parallel_subjects: usize,
    pub report_test: bool,
    pub pipeline: PipelineConfig,
}

struct KeyInfo {
    key: &'static str,
    alias: &'static str,
    help: &'static str,
}

macro_rules! keys {
    ($(($key:literal, $alias:literal, $help:literal)),* $(,)?) => {
        &[$(KeyInfo { key: $key, alias: $alias, help: $help }),*]
    };
}

const KEYS: &[KeyInfo] = keys![
    (
        "manifest",
        "manifest",
        "dataset manifest (path<TAB>label<TAB>subject per line)"
    ),
    ("output", "output", "output directory"),
    (
        "seed",
        "seed",
        "random seed (falls back to DEPTHSIGN_SEED, then 0)"
    ),
    ("split", "split", "train,validation,test fractions"),
    (
        "subjects",
        "subjects",
        "`all` or a comma-separated list of subject ids"
    ),
    (
        "parallel_subjects",
        "parallel-subjects",
        "subjects trained concurrently"
    ),
    (
        "report_test",
        "report-test",
        "also report on the test partition (true/false)"
    ),
    ("ae1_hidden", "ae1-hidden", "first autoencoder hidden units"),
    ("ae1_epochs", "ae1-epochs", "first autoencoder epoch cap"),
    (
        "ae1_learning_rate",
        "ae1-learning-rate",
        "first autoencoder learning rate"
    ),
    ("ae1_momentum", "ae1-momentum", "first autoencoder momentum"),
    (
        "ae1_l2_weight",
        "ae1-l2-weight",
        "first autoencoder weight decay"
    ),
    (
        "ae1_sparsity_target",
        "ae1-sparsity-target",
        "first autoencoder target activation"
    ),
    (
        "ae1_sparsity_weight",
        "ae1-sparsity-weight",
        "first autoencoder sparsity penalty weight"
    ),
    (
        "ae1_batch_size",
        "ae1-batch-size",
        "first autoencoder mini-batch size"
    ),
    (
        "ae2_hidden",
        "ae2-hidden",
        "second autoencoder hidden units"
    ),
    ("ae2_epochs", "ae2-epochs", "second autoencoder epoch cap"),
    (
        "ae2_learning_rate",
        "ae2-learning-rate",
        "second autoencoder learning rate"
    ),
    (
        "ae2_momentum",
        "ae2-momentum",
        "second autoencoder momentum"
    ),
    (
        "ae2_l2_weight",
        "ae2-l2-weight",
        "second autoencoder weight decay"
    ),
    (
        "ae2_sparsity_target",
        "ae2-sparsity-target",
        "second autoencoder target activation"
    ),
    (
        "ae2_sparsity_weight",
        "ae2-sparsity-weight",
        "second autoencoder sparsity penalty weight"
    ),
    (
        "ae2_batch_size",
        "ae2-batch-size",
        "second autoencoder mini-batch size"
    ),
    ("softmax_epochs", "softmax-epochs", "softmax epoch cap"),
    (
        "softmax_learning_rate",
        "softmax-learning-rate",
        "softmax learning rate"
    ),
    ("softmax_momentum", "softmax-momentum", "softmax momentum"),
    (
        "softmax_l2_weight",
        "softmax-l2-weight",
        "softmax weight decay"
    ),
    (
        "softmax_batch_size",
        "softmax-batch-size",
        "softmax mini-batch size"
    ),
    (
        "fine_tune_epochs",
        "fine-tune-epochs",
        "joint fine-tuning epochs (0 = off)"
    ),
    (
        "fine_tune_learning_rate",
        "fine-tune-learning-rate",
        "fine-tuning learning rate"
    ),
    (
        "fine_tune_momentum",
        "fine-tune-momentum",
        "fine-tuning momentum"
    ),
    (
        "fine_tune_l2_weight",
        "fine-tune-l2-weight",
        "fine-tuning weight decay"
    ),
    (
        "fine_tune_batch_size",
        "fine-tune-batch-size",
        "fine-tuning mini-batch size"
    ),
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Param(format!("bad value `{value}` for `{key}`")))
}

fn set_ae(hyp: &mut AeHyper, field: &str, key: &str, v: &str) -> Result<bool> {
    match field {
        "hidden" => hyp.hidden = parse_value(key, v)?,
        "epochs" => hyp.epochs_max = parse_value(key, v)?,
        "learning_rate" => hyp.learning_rate = parse_value(key, v)?,
        "momentum" => hyp.momentum = parse_value(key, v)?,
        "l2_weight" => hyp.l2_weight = parse_value(key, v)?,
        "sparsity_target" => hyp.sparsity_target = parse_value(key, v)?,
        "sparsity_weight" => hyp.sparsity_weight = parse_value(key, v)?,
        "batch_size" => hyp.batch_size = parse_value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn set_softmax(hyp: &mut SoftmaxHyper, field: &str, key: &str, v: &str) -> Result<bool> {
    match field {
        "epochs" => hyp.epochs_max = parse_value(key, v)?,
        "learning_rate" => hyp.learning_rate = parse_value(key, v)?,
        "momentum" => hyp.momentum = parse_value(key, v)?,
        "l2_weight" => hyp.l2_weight = parse_value(key, v)?,
        "batch_size" => hyp.batch_size = parse_value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn ae_field(hyp: &AeHyper, field: &str) -> String {
    match field {
        "hidden" => hyp.hidden.to_string(),
        "epochs" => hyp.epochs_max.to_string(),
        "learning_rate" => hyp.learning_rate.to_string(),
        "momentum" => hyp.momentum.to_string(),
        "l2_weight" => hyp.l2_weight.to_string(),
        "sparsity_target" => hyp.sparsity_target.to_string(),
        "sparsity_weight" => hyp.sparsity_weight.to_string(),
        "batch_size" => hyp.batch_size.to_string(),
        _ => unreachable!("unknown autoencoder field {field}"),
    }
}

fn softmax_field(hyp: &SoftmaxHyper, field: &str) -> String {
    match field {
        "epochs" => hyp.epochs_max.to_string(),
        "learning_rate" => hyp.learning_rate.to_string(),
        "momentum" => hyp.momentum.to_string(),
        "l2_weight" => hyp.l2_weight.to_string(),
        "batch_size" => hyp.batch_size.to_string(),
        _ => unreachable!("unknown softmax field {field}"),
    }
}

impl RunConfig {
    fn with_pipeline(pipeline: PipelineConfig) -> Self {
        RunConfig {
            manifest: None,
            output: PathBuf::from("runs"),
            seed: None,
            split: DEFAULT_FRACTIONS,
            subjects: SubjectSelection::All,
            parallel_subjects: 1,
            report_test: false,
            pipeline,
        }
    }

    /// Small layers for small synthetic images.
    pub fn desk_defaults() -> Self {
        Self::with_pipeline(PipelineConfig::desk())
    }

    /// Hidden sizes 100/50, epoch caps 400/100/400 and a 50/25/25 split.
    pub fn paper_defaults() -> Self {
        Self::with_pipeline(PipelineConfig::paper())
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|k| k.key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "manifest" => self.manifest = Some(PathBuf::from(v)),
            "output" => self.output = PathBuf::from(v),
            "seed" => self.seed = Some(parse_value(key, v)?),
            "split" => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| parse_value(key, p))
                    .collect::<Result<_>>()?;
                self.split = parts.try_into().map_err(|_| {
                    Error::Param(format!("`split` needs three fractions, got `{v}`"))
                })?;
            }
            "subjects" => {
                self.subjects = if v == "all" {
                    SubjectSelection::All
                } else {
                    SubjectSelection::Only(
                        v.split(',')
                            .map(|s| parse_value(key, s))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "parallel_subjects" => self.parallel_subjects = parse_value(key, v)?,
            "report_test" => self.report_test = parse_value(key, v)?,
            _ => {
                let handled = if let Some(field) = key.strip_prefix("ae1_") {
                    set_ae(&mut self.pipeline.autoencoders[0], field, key, v)?
                } else if let Some(field) = key.strip_prefix("ae2_") {
                    set_ae(&mut self.pipeline.autoencoders[1], field, key, v)?
                } else if let Some(field) = key.strip_prefix("softmax_") {
                    set_softmax(&mut self.pipeline.softmax, field, key, v)?
                } else if let Some(field) = key.strip_prefix("fine_tune_") {
                    set_softmax(&mut self.pipeline.fine_tune, field, key, v)?
                } else {
                    false
                };
                if !handled {
                    return Err(Error::Param(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let ae = |i: usize, f| ae_field(&self.pipeline.autoencoders[i], f);
        Some(match key {
            "manifest" => self.manifest.as_ref()?.display().to_string(),
            "output" => self.output.display().to_string(),
            "seed" => self.seed?.to_string(),
            "split" => self.split.map(|f| f.to_string()).join(","),
            "subjects" => match &self.subjects {
                SubjectSelection::All => "all".into(),
                SubjectSelection::Only(s) => {
                    s.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
                }
            },
            "parallel_subjects" => self.parallel_subjects.to_string(),
            "report_test" => self.report_test.to_string(),
            _ => {
                if let Some(f) = key.strip_prefix("ae1_") {
                    ae(0, f)
                } else if let Some(f) = key.strip_prefix("ae2_") {
                    ae(1, f)
                } else if let Some(f) = key.strip_prefix("softmax_") {
                    softmax_field(&self.pipeline.softmax, f)
                } else {
                    softmax_field(&self.pipeline.fine_tune, key.strip_prefix("fine_tune_")?)
                }
            }
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Param(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Param(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::keys() {
            if let Some(v) = self.get(k) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!(
                "split fractions must be non-negative and sum to 1, got {:?}",
                self.split
            )));
        }
        if self.parallel_subjects == 0 {
            return Err(Error::Param("parallel_subjects must be at least 1".into()));
        }
        if let SubjectSelection::Only(s) = &self.subjects {
            if s.is_empty() {
                return Err(Error::Param("empty subject list".into()));
            }
        }
        self.pipeline.validate()
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Seed from the environment fallback, if set and valid.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(parse_value(SEED_ENV, &v)?)),
        Err(_) => Ok(None),
    }
}

/// RNG stream that picks a subject's partitions; shared by train and eval.
pub fn split_rng(seed: u64, subject: u32) -> RngState {
    RngState::new(seed).fork(subject as u64)
}

fn training_rng(seed: u64, subject: u32) -> RngState {
    RngState::new(seed).fork((1 << 32) + subject as u64)
}

/// Config keys given on the command line, in key order.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides(pub Vec<(String, String)>);

impl FromArgMatches for ConfigOverrides {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = ConfigOverrides::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        for k in KEYS {
            if let Some(v) = m.get_one::<String>(k.key) {
                self.0.push((k.key.to_string(), v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for ConfigOverrides {
    fn augment_args(cmd: Command) -> Command {
        KEYS.iter().fold(cmd, |c, k| {
            let arg = Arg::new(k.key)
                .long(k.key)
                .value_name("VALUE")
                .help(k.help)
                .help_heading("Config keys");
            c.arg(if k.alias != k.key {
                arg.alias(k.alias)
            } else {
                arg
            })
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "depthsign",
    version,
    about = "Stacked sparse autoencoder sign classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Write a synthetic PGM gesture corpus and its manifest.
    GenData(GenDataArgs),
    /// Train one stacked network per subject and report on validation.
    Train(TrainArgs),
    /// Evaluate trained bundles on a partition of a dataset.
    Eval(EvalArgs),
    /// Classify individual PGM images.
    Predict(PredictArgs),
    /// Emit per-figure CSVs from a report (and optional trace files).
    PlotData(PlotDataArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub side: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub subjects: u32,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// `key = value` config file, applied before command-line keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the full-scale layer sizes, epoch caps and split.
    #[arg(long)]
    pub paper_defaults: bool,
    /// Build and save untrained networks without training.
    #[arg(long)]
    pub init_only: bool,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Model bundle; repeat for one column per subject.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "validation")]
    pub partition: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long = "trace")]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Commands::GenData(a) => cmd_gen_data(&a),
        Commands::Train(a) => cmd_train(&a),
        Commands::Eval(a) => cmd_eval(&a),
        Commands::Predict(a) => cmd_predict(&a),
        Commands::PlotData(a) => cmd_plotdata(&a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    if args.subjects == 0 {
        return Err(Error::Param("need at least one subject".into()));
    }
    let root = RngState::new(seed);
    let mut sets = Vec::with_capacity(args.subjects as usize);
    for subject in 1..=args.subjects {
        let mut ds = synth_gestures(
            args.classes,
            args.per_class,
            args.side,
            args.noise,
            &mut root.fork(subject as u64),
        )?;
        for img in &mut ds.images {
            img.subject = subject;
        }
        sets.push(ds);
    }

    let image_dir = args.out.join("images");
    create_dir(&image_dir)?;
    let mut manifest = Manifest {
        class_count: Some(args.classes),
        class_names: None,
        records: Vec::new(),
    };
    for ds in &sets {
        let mut seen = vec![0usize; args.classes];
        for img in &ds.images {
            let name = format!(
                "su{}_c{}_{:04}.pgm",
                img.subject, img.label, seen[img.label]
            );
            seen[img.label] += 1;
            data::write_pgm(&image_dir.join(&name), img.width, img.height, &img.pixels)?;
            manifest.records.push(ManifestRecord {
                path: Path::new("images").join(name),
                label: img.label,
                subject: img.subject,
            });
        }
    }
    let manifest_path = args.out.join("manifest.tsv");
    write_file(&manifest_path, manifest.to_text())?;
    println!(
        "wrote {} images to {}",
        manifest.records.len(),
        manifest_path.display()
    );
    Ok(())
}

/// Builds the effective run config: preset, then config file, then the
/// seed environment fallback, then command-line keys.
pub fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = if args.paper_defaults {
        RunConfig::paper_defaults()
    } else {
        RunConfig::desk_defaults()
    };
    if let Some(path) = &args.config {
        cfg.apply_text(&read_text(path)?)?;
    }
    let flag_seed = args.overrides.0.iter().any(|(k, _)| k == "seed");
    if cfg.seed.is_none() && !flag_seed {
        cfg.seed = env_seed()?;
    }
    for (k, v) in &args.overrides.0 {
        cfg.set(k, v)?;
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(0);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selected_subjects(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<u32>> {
    let available = ds.subjects();
    match &cfg.subjects {
        SubjectSelection::All => {
            if available.is_empty() {
                return Err(Error::Param("dataset is empty".into()));
            }
            Ok(available)
        }
        SubjectSelection::Only(list) => {
            for s in list {
                if !available.contains(s) {
                    return Err(Error::Param(format!(
                        "subject {s} not in dataset (have {available:?})"
                    )));
                }
            }
            Ok(list.clone())
        }
    }
}

pub fn subject_name(subject: u32) -> String {
    format!("SU{subject}")
}

fn subject_dir(cfg: &RunConfig, subject: u32) -> PathBuf {
    cfg.output.join(format!("su{subject}"))
}

/// Config snapshot stored in a subject's bundle.
fn bundle_config(cfg: &RunConfig, subject: u32) -> String {
    let mut snapshot = cfg.clone();
    snapshot.subjects = SubjectSelection::Only(vec![subject]);
    snapshot.to_text()
}

struct SubjectOutcome {
    validation: SubjectResult,
    test: Option<SubjectResult>,
}

fn evaluate_partition(
    net: &StackedNetwork,
    ds: &Dataset,
    idx: &[usize],
    name: String,
) -> Result<SubjectResult> {
    let (posteriors, predicted) = stack::predict(net, &ds.matrix(idx))?;
    let truth = ds.labels(idx);
    Ok(SubjectResult {
        name,
        confusion: metrics::confusion(&truth, &predicted, ds.class_count)?,
        y: posteriors,
        d: one_hot(&truth, ds.class_count)?,
    })
}

fn train_subject(cfg: &RunConfig, all: &Dataset, subject: u32) -> Result<SubjectOutcome> {
    let ds = all.for_subject(subject);
    let seed = cfg.effective_seed();
    let split = split_dataset(&ds, cfg.split, &mut split_rng(seed, subject))?;
    let outcome = greedy_train(&ds, &split, &cfg.pipeline, &training_rng(seed, subject))
        .map_err(|e| e.in_stage(&subject_name(subject)))?;

    let dir = subject_dir(cfg, subject);
    create_dir(&dir)?;
    let bundle = ModelBundle {
        network: outcome.network,
        config: bundle_config(cfg, subject),
    };
    write_file(&dir.join("model.dsnw"), bundle.to_bytes())?;
    for (i, ae) in outcome.autoencoders.iter().enumerate() {
        write_file(&dir.join(format!("ae{}.dsae", i + 1)), ae.to_bytes())?;
        write_file(&dir.join(format!("ae{}.txt", i + 1)), ae.to_text())?;
    }
    for (stage, trace) in &outcome.traces {
        write_file(&dir.join(format!("trace_{stage}.csv")), trace.to_csv())?;
    }

    let name = subject_name(subject);
    let validation = evaluate_partition(&bundle.network, &ds, &split.validation, name.clone())?;
    let test = if cfg.report_test {
        Some(evaluate_partition(&bundle.network, &ds, &split.test, name)?)
    } else {
        None
    };
    Ok(SubjectOutcome { validation, test })
}

/// Runs `work` over `items` with up to `threads` workers, returning results
/// in item order.
fn run_parallel<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    work: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = work(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("worker finished"))
        .collect()
}

fn write_report(dir: &Path, partition: Partition, report: &EvalReport) -> Result<()> {
    write_file(
        &dir.join(format!("report_{}.csv", partition.name())),
        report.to_csv(),
    )?;
    write_file(
        &dir.join(format!("report_{}.txt", partition.name())),
        report.to_table(),
    )
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let manifest = cfg
        .manifest
        .clone()
        .ok_or_else(|| Error::Param("no manifest given (--manifest or config key)".into()))?;
    let ds = load_dataset(&manifest)?;
    let subjects = selected_subjects(&cfg, &ds)?;
    for &s in &subjects {
        // fail on unusable partitions before anything is written
        let sub = ds.for_subject(s);
        let split = split_dataset(&sub, cfg.split, &mut split_rng(cfg.effective_seed(), s))?;
        if !args.init_only && (split.train.is_empty() || split.validation.is_empty()) {
            return Err(Error::Param(format!(
                "subject {s}: {} images leave an empty train or validation partition",
                sub.len()
            )));
        }
    }

    create_dir(&cfg.output)?;
    write_file(&cfg.output.join("config.txt"), cfg.to_text())?;

    if args.init_only {
        for &s in &subjects {
            let net = StackedNetwork::initialize(
                ds.pixel_count(),
                ds.class_count,
                &cfg.pipeline,
                &mut training_rng(cfg.effective_seed(), s),
            )?;
            let dir = subject_dir(&cfg, s);
            create_dir(&dir)?;
            let bundle = ModelBundle {
                network: net,
                config: bundle_config(&cfg, s),
            };
            write_file(&dir.join("model.dsnw"), bundle.to_bytes())?;
            println!(
                "{}: initialized {:?}",
                subject_name(s),
                bundle.network.layer_dims()
            );
        }
        return Ok(());
    }

    let results = run_parallel(&subjects, cfg.parallel_subjects, |&s| {
        train_subject(&cfg, &ds, s)
    });
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for r in results {
        let r = r?;
        validation.push(r.validation);
        test.extend(r.test);
    }
    let report = metrics::report(&validation)?;
    write_report(&cfg.output, Partition::Validation, &report)?;
    print!("{}", report.to_table());
    if cfg.report_test {
        write_report(&cfg.output, Partition::Test, &metrics::report(&test)?)?;
    }
    Ok(())
}

fn read_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Subject and partitioning recorded in a bundle's config snapshot.
fn bundle_run(bundle: &ModelBundle) -> Result<(RunConfig, u32)> {
    let mut cfg = RunConfig::desk_defaults();
    cfg.apply_text(&bundle.config)?;
    match &cfg.subjects {
        SubjectSelection::Only(s) if s.len() == 1 => {
            let s = s[0];
            Ok((cfg, s))
        }
        _ => Err(Error::Format(
            "bundle config does not name a single subject".into(),
        )),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let partition: Partition = args.partition.parse()?;
    let bundles = args
        .models
        .iter()
        .map(|p| read_bundle(p))
        .collect::<Result<Vec<_>>>()?;
    let ds = load_dataset(&args.manifest)?;
    let manifest = Manifest::parse(&read_text(&args.manifest)?, &args.manifest)?;

    let mut results = Vec::new();
    let mut predictions = String::from("subject,image,true_label,predicted_label\n");
    for (bundle, path) in bundles.iter().zip(&args.models) {
        let (cfg, subject) = bundle_run(bundle)?;
        let net = &bundle.network;
        if net.input_dim() != ds.pixel_count() || net.classes() != ds.class_count {
            let (w, h) = ds.image_dims();
            return Err(Error::Param(format!(
                "{} expects {} pixels and {} classes; dataset images are {w}x{h} ({} pixels) with {} classes",
                path.display(),
                net.input_dim(),
                net.classes(),
                ds.pixel_count(),
                ds.class_count
            )));
        }
        let members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.images[i].subject == subject)
            .collect();
        if members.is_empty() {
            return Err(Error::Param(format!("subject {subject} not in dataset")));
        }
        let sub = ds.for_subject(subject);
        let split: Split = split_dataset(
            &sub,
            cfg.split,
            &mut split_rng(cfg.effective_seed(), subject),
        )?;
        let idx = split.indices(partition);
        let result = evaluate_partition(net, &sub, idx, subject_name(subject))?;
        let predicted = result.y.argmax_columns();
        for (&i, p) in idx.iter().zip(&predicted) {
            let rec = &manifest.records[members[i]];
            let _ = writeln!(
                predictions,
                "{subject},{},{},{p}",
                rec.path.display(),
                rec.label
            );
        }
        results.push(result);
    }
    let report = metrics::report(&results)?;
    create_dir(&args.out)?;
    write_report(&args.out, partition, &report)?;
    write_file(
        &args
            .out
            .join(format!("predictions_{}.csv", partition.name())),
        predictions,
    )?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let bundle = read_bundle(&args.model)?;
    let net = &bundle.network;
    let mut columns = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let pgm = data::read_pgm(path)?;
        if pgm.width * pgm.height != net.input_dim() {
            return Err(Error::Param(format!(
                "{} is {}x{} ({} pixels) but the model expects {} pixels",
                path.display(),
                pgm.width,
                pgm.height,
                pgm.width * pgm.height,
                net.input_dim()
            )));
        }
        columns.push(pgm.normalized());
    }
    let rows = net.input_dim();
    let mut x = Matrix::zeros(rows, columns.len());
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            x.set(r, c, v);
        }
    }
    let (posteriors, labels) = stack::predict(net, &x)?;
    for (c, path) in args.images.iter().enumerate() {
        let probs: Vec<String> = posteriors.column(c).iter().map(f64::to_string).collect();
        println!("{}\t{}\t{}", path.display(), labels[c], probs.join(","));
    }
    Ok(())
}

/// Figure number and file stem for each report metric, in report order.
pub const FIGURES: [(&str, &str); 4] = [
    ("NRMSE", "fig7_nrmse"),
    ("ACC", "fig8_acc"),
    ("F1S", "fig9_f1s"),
    ("BER", "fig10_ber"),
];

pub fn cmd_plotdata(args: &PlotDataArgs) -> Result<()> {
    let report = EvalReport::from_csv(&read_text(&args.report)?)
        .map_err(|e| Error::Format(format!("{}: {e}", args.report.display())))?;
    let mut curves = Vec::new();
    for path in &args.traces {
        let trace = crate::optim::TrainTrace::from_csv(&read_text(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".into());
        curves.push((stem, trace));
    }

    create_dir(&args.out)?;
    for (k, (metric, stem)) in FIGURES.iter().enumerate() {
        let mut out = format!("subject,{}\n", metric.to_lowercase());
        for (name, row) in &report.subjects {
            let _ = writeln!(out, "{name},{}", MetricRow::values(row)[k]);
        }
        write_file(&args.out.join(format!("{stem}.csv")), out)?;
    }
    for (stem, trace) in curves {
        write_file(&args.out.join(format!("curve_{stem}.csv")), trace.to_csv())?;
    }
    Ok(())
}
