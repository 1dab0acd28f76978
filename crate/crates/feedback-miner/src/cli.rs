//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 runtime
//! failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use feedback_miner_core::classifier::{train_tri, ClassifierError, TextEncoder, TriTraining};
use feedback_miner_core::corpus::{class_distribution, make_folds, stratified_split};
use feedback_miner_core::encoder::init_encoder;
use feedback_miner_core::hyperopt::{
    cv_objective, synthetic_objective, tune, HyperoptError, TriLearner, Trial,
};
use feedback_miner_core::metrics::{
    evaluate, render_report, EvaluateError, Evaluation, EvaluationReport,
};
use feedback_miner_core::rng::{derive_seed, rng_for};
use feedback_miner_core::tokenizer::{content_ids, normalize, pre_tokenize};
use feedback_miner_core::{
    CommentClassifier, Corpus, EncoderWeights, Label, PerLabel, ScoringMode,
};
use serde::Serialize;

use crate::bundle::{load_bundle, save_bundle, BundleError, BundleModel};
use crate::checkpoint::{self, CheckpointError};
use crate::config::{ConfigError, Overrides, RunConfig};
use crate::io::{
    append_history, load_corpus, load_vocab, parse_predict_input, read_history, DataError,
};

pub const LOG_ENV: &str = "FEEDBACK_MINER_LOG";
pub const UNK_WARNING_RATE: f64 = 0.2;

const SPLIT_STREAM: u64 = 0x5B1;
const FOLD_STREAM: u64 = 0xF01D;
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Parser)]
#[command(
    name = "feedback-miner",
    version,
    about = "Classify user comments into problem reports, feature requests and irrelevant chatter"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Encoder preset (toy, english-base, italian-base, multilingual-base)
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Balance each binary training set by random undersampling
    #[arg(long, global = true, value_name = "BOOL")]
    pub undersample: Option<bool>,
    /// Scoring mode for reports
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Binary,
    Fused,
}

impl From<ModeArg> for ScoringMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Binary => ScoringMode::Binary,
            ModeArg::Fused => ScoringMode::Fused,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check a corpus file and summarize it
    Validate {
        corpus: PathBuf,
        /// Language tag for records that carry none
        #[arg(long)]
        language: Option<String>,
    },
    /// Train the three binary classifiers and write a bundle
    Train {
        /// Training corpus (overrides the config)
        #[arg(long, value_name = "PATH")]
        train: Option<PathBuf>,
    },
    /// Search the learning rate with TPE over cross-validation folds
    Tune {
        #[arg(long, value_name = "PATH")]
        train: Option<PathBuf>,
        /// Total number of trials, counting any already in the history
        #[arg(long)]
        n_trials: Option<usize>,
        /// History file to resume from and append to
        #[arg(long, value_name = "PATH")]
        history: Option<PathBuf>,
        /// Score trials with the analytic test objective instead of training
        #[arg(long)]
        synthetic: bool,
        /// Noise level of the synthetic objective
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// Score a bundle on a labeled test corpus
    Evaluate {
        #[arg(long, value_name = "DIR")]
        bundle: PathBuf,
        #[arg(long, value_name = "PATH")]
        test: Option<PathBuf>,
    },
    /// Label comments from a JSONL file of {"id", "text"} records
    Predict {
        #[arg(long, value_name = "DIR")]
        bundle: PathBuf,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Train on one or more corpora and test on another
    Experiment {
        #[arg(long)]
        label: Option<String>,
        /// Training corpus; repeat for several
        #[arg(long = "train", value_name = "PATH")]
        train: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        test: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<BundleError> for Failure {
    fn from(e: BundleError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidConfig(_) | ClassifierError::Incompatible(_) => {
                Failure::Usage(e.into())
            }
            ClassifierError::Corpus(_)
            | ClassifierError::EmptyTrainingSet(_)
            | ClassifierError::EmptyValidation(_) => Failure::Data(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<EvaluateError> for Failure {
    fn from(e: EvaluateError) -> Self {
        match e {
            EvaluateError::Classifier(c) => c.into(),
            EvaluateError::Metrics(_) => Failure::Data(e.into()),
        }
    }
}

impl From<HyperoptError> for Failure {
    fn from(e: HyperoptError) -> Self {
        match e {
            HyperoptError::Classifier(c) => c.into(),
            HyperoptError::Evaluate(ev) => ev.into(),
            HyperoptError::Corpus(_) => Failure::Data(e.into()),
            HyperoptError::DegenerateSpace { .. }
            | HyperoptError::InvalidConfig(_)
            | HyperoptError::NoTrials => Failure::Usage(e.into()),
        }
    }
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", path.display())))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.code()
        }
    }
}

fn resolve(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        preset: common.preset.clone(),
        undersample: common.undersample,
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.common)?;
    let mode = cli
        .common
        .mode
        .map(ScoringMode::from)
        .unwrap_or(ScoringMode::Fused);
    match cli.command {
        Command::Validate { corpus, language } => cmd_validate(&cfg, &corpus, language.as_deref()),
        Command::Train { train } => cmd_train(&cfg, train),
        Command::Tune {
            train,
            n_trials,
            history,
            synthetic,
            noise,
        } => cmd_tune(&cfg, train, n_trials, history, synthetic.then_some(noise)),
        Command::Evaluate { bundle, test } => {
            cmd_evaluate(&cfg, cli.common.config.is_some(), &bundle, test, mode)
        }
        Command::Predict { bundle, input } => cmd_predict(&cfg, &bundle, &input),
        Command::Experiment { label, train, test } => {
            cmd_experiment(&cfg, label, train, test, mode)
        }
    }
}

fn text_encoder(cfg: &RunConfig) -> Result<TextEncoder, Failure> {
    let path = cfg.vocab.as_deref().ok_or_else(|| {
        Failure::Usage(anyhow::anyhow!(
            "no vocabulary configured (set \"vocab\" in the config)"
        ))
    })?;
    let text = TextEncoder::new(load_vocab(path)?, cfg.tokenizer.clone());
    Ok(text)
}

/// Pretrained weights when configured; otherwise a fresh encoder whose
/// embedding table is sized to the vocabulary.
fn base_encoder(cfg: &RunConfig, text: &TextEncoder) -> Result<EncoderWeights<f32>, Failure> {
    let preset = cfg.preset()?;
    let mut enc_cfg = preset.config();
    if enc_cfg.cased == cfg.tokenizer.lowercase {
        log::warn!(
            "preset {} is {} but the tokenizer {} lowercase",
            preset.name(),
            if enc_cfg.cased { "cased" } else { "uncased" },
            if cfg.tokenizer.lowercase {
                "does"
            } else {
                "does not"
            }
        );
    }
    let base = match &cfg.encoder_weights {
        Some(path) => {
            log::info!("loading encoder weights from {}", path.display());
            checkpoint::load_encoder(path, Some(&enc_cfg))?
        }
        None => {
            enc_cfg.vocab_size = text.vocab.len();
            log::info!(
                "initializing {} encoder from scratch ({} parameters)",
                preset.name(),
                enc_cfg.parameter_count()
            );
            init_encoder(&enc_cfg, derive_seed(cfg.seed, &[INIT_STREAM])).map_err(runtime)?
        }
    };
    text.check_compatible(&base.config)?;
    Ok(base)
}

fn config_corpus(cfg: &RunConfig, flag: Option<PathBuf>, which: &str) -> Result<Corpus, Failure> {
    match flag {
        Some(path) => Ok(load_corpus(&path, None)?),
        None => Ok(load_corpus(cfg.corpus(which)?, Some(&cfg.language))?),
    }
}

fn require_non_empty(c: &Corpus) -> Result<(), Failure> {
    if c.is_empty() {
        return Err(data(anyhow::anyhow!("corpus {} is empty", c.name())));
    }
    Ok(())
}

/// Fraction of WordPiece content tokens that fall back to `[UNK]`.
pub fn unk_rate(corpus: &Corpus, text: &TextEncoder) -> f64 {
    let unk = text.vocab.unk_id();
    let (mut total, mut unknown) = (0usize, 0usize);
    for c in corpus.comments() {
        let ids = content_ids(&c.text, &text.vocab, &text.config);
        total += ids.len();
        unknown += ids.iter().filter(|&&id| id == unk).count();
    }
    if total == 0 {
        0.0
    } else {
        unknown as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthSummary {
    pub unit: &'static str,
    pub min: usize,
    pub median: usize,
    pub max: usize,
    /// `(upper bound exclusive, count)`; the last bucket is open-ended.
    pub histogram: Vec<(String, usize)>,
    pub capacity: usize,
    pub within_capacity: f64,
}

const BUCKETS: [usize; 6] = [16, 32, 64, 128, 256, 512];

fn length_summary(lengths: &mut [usize], unit: &'static str, capacity: usize) -> LengthSummary {
    lengths.sort_unstable();
    let mut histogram = Vec::new();
    let mut lower = 0;
    for &upper in &BUCKETS {
        let n = lengths.iter().filter(|&&l| l >= lower && l < upper).count();
        histogram.push((format!("{lower}-{}", upper - 1), n));
        lower = upper;
    }
    histogram.push((
        format!("{lower}+"),
        lengths.iter().filter(|&&l| l >= lower).count(),
    ));
    LengthSummary {
        unit,
        min: lengths[0],
        median: lengths[lengths.len() / 2],
        max: lengths[lengths.len() - 1],
        histogram,
        capacity,
        within_capacity: lengths.iter().filter(|&&l| l <= capacity).count() as f64
            / lengths.len() as f64,
    }
}

fn cmd_validate(cfg: &RunConfig, path: &Path, language: Option<&str>) -> Result<(), Failure> {
    let corpus = match load_corpus(path, language) {
        Ok(c) => c,
        Err(e) => {
            for le in e.line_errors() {
                eprintln!("{}:{}: {}", path.display(), le.line, le.message);
            }
            return Err(e.into());
        }
    };
    require_non_empty(&corpus)?;
    let counts = corpus.class_counts();
    let dist = class_distribution(&corpus).map_err(data)?;
    let capacity = cfg.tokenizer.content_capacity();
    let (unit, mut lengths): (&str, Vec<usize>) = match &cfg.vocab {
        Some(v) => {
            let text = TextEncoder::new(load_vocab(v)?, cfg.tokenizer.clone());
            let lens = corpus
                .comments()
                .iter()
                .map(|c| content_ids(&c.text, &text.vocab, &text.config).len())
                .collect();
            ("wordpiece tokens", lens)
        }
        None => {
            let lens = corpus
                .comments()
                .iter()
                .map(|c| pre_tokenize(&normalize(&c.text, &cfg.tokenizer)).len())
                .collect();
            ("words", lens)
        }
    };
    let lengths = length_summary(&mut lengths, unit, capacity);

    println!(
        "corpus {} ({}): {} comments",
        corpus.name(),
        corpus.language(),
        corpus.len()
    );
    for label in Label::ALL {
        println!(
            "  {:<16} {:>6}  {:>5.1}%",
            label.display_name(),
            counts[label],
            100.0 * dist[label]
        );
    }
    println!(
        "lengths in {}: min {}, median {}, max {}",
        lengths.unit, lengths.min, lengths.median, lengths.max
    );
    for (bucket, n) in &lengths.histogram {
        println!("  {bucket:>8} {n:>6}");
    }
    println!(
        "{:.1}% fit in {} content positions",
        100.0 * lengths.within_capacity,
        capacity
    );

    if let Some(out) = &cfg.out {
        let summary = serde_json::json!({
            "corpus": corpus.name(),
            "language": corpus.language(),
            "comments": corpus.len(),
            "counts": label_map(|l| counts[l]),
            "distribution": label_map(|l| dist[l]),
            "lengths": lengths,
        });
        write_json(&out.join("validate.json"), &summary)?;
        cfg.write_resolved(out)?;
    }
    Ok(())
}

fn label_map<T>(mut f: impl FnMut(Label) -> T) -> BTreeMap<Label, T> {
    Label::ALL.into_iter().map(|l| (l, f(l))).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(runtime)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

/// Split off the checkpoint-selection set, then train all three models.
fn train_pipeline(
    cfg: &RunConfig,
    corpus: &Corpus,
    base: &EncoderWeights<f32>,
    text: &TextEncoder,
) -> Result<TriTraining<f32>, Failure> {
    let (train, val) = stratified_split(
        corpus,
        cfg.validation_fraction,
        derive_seed(cfg.seed, &[SPLIT_STREAM]),
    )
    .map_err(data)?;
    log::info!(
        "training on {} comments, selecting checkpoints on {}",
        train.len(),
        val.len()
    );
    let result = train_tri(&train, &val, &cfg.train, base, text)?;
    for (label, ck) in result.checkpoints.iter() {
        for r in &ck.history {
            log::debug!(
                "{label}: epoch {} step {} validation accuracy {:.4}",
                r.epoch,
                r.step,
                r.accuracy
            );
        }
        log::info!(
            "{label}: trained on {} (validation {}), kept step {} with validation accuracy {:.4}",
            ck.train_size,
            ck.val_size,
            ck.step,
            ck.val_accuracy
        );
    }
    Ok(result)
}

fn write_training_outputs(
    out: &Path,
    result: &TriTraining<f32>,
    text: &TextEncoder,
) -> Result<(), Failure> {
    let models = PerLabel::from_fn(|l| BundleModel::from_checkpoint(&result.checkpoints[l]));
    save_bundle(&out.join("bundle"), models, text)?;
    let mut log_lines = String::new();
    for (label, ck) in result.checkpoints.iter() {
        for r in &ck.history {
            let line = serde_json::json!({
                "event": "validation", "label": label, "epoch": r.epoch, "step": r.step, "accuracy": r.accuracy,
            });
            log_lines.push_str(&format!("{line}\n"));
        }
        let line = serde_json::json!({
            "event": "checkpoint", "label": label, "step": ck.step, "val_accuracy": ck.val_accuracy,
            "train_size": ck.train_size, "val_size": ck.val_size,
        });
        log_lines.push_str(&format!("{line}\n"));
    }
    write_file(&out.join("train_log.jsonl"), log_lines.as_bytes())
}

fn cmd_train(cfg: &RunConfig, train: Option<PathBuf>) -> Result<(), Failure> {
    let out = cfg.out_dir()?.to_path_buf();
    let text = text_encoder(cfg)?;
    let corpus = config_corpus(cfg, train, "train")?;
    require_non_empty(&corpus)?;
    let base = base_encoder(cfg, &text)?;
    let result = train_pipeline(cfg, &corpus, &base, &text)?;
    write_training_outputs(&out, &result, &text)?;
    cfg.write_resolved(&out)?;
    println!(
        "{:<16} {:>6} {:>6} {:>6} {:>8}",
        "label", "train", "val", "step", "val acc"
    );
    for (label, ck) in result.checkpoints.iter() {
        println!(
            "{:<16} {:>6} {:>6} {:>6} {:>8.4}",
            label.display_name(),
            ck.train_size,
            ck.val_size,
            ck.step,
            ck.val_accuracy
        );
    }
    println!("bundle written to {}", out.join("bundle").display());
    Ok(())
}

fn cmd_tune(
    cfg: &RunConfig,
    train: Option<PathBuf>,
    n_trials: Option<usize>,
    history: Option<PathBuf>,
    synthetic_noise: Option<f64>,
) -> Result<(), Failure> {
    let out = cfg.out_dir()?.to_path_buf();
    let history_path = history.unwrap_or_else(|| out.join("history.jsonl"));
    let n_trials = n_trials.unwrap_or(cfg.n_trials);
    if let Some(dir) = history_path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
    }
    let existing = read_history(&history_path)?;
    if !existing.is_empty() {
        log::info!(
            "resuming from {} trials in {}",
            existing.len(),
            history_path.display()
        );
    }
    let record = |t: &Trial| -> Result<(), Failure> {
        log::info!(
            "trial lr {:.3e}: objective {:.4} (folds {:?})",
            t.lr,
            t.objective,
            t.fold_scores
        );
        Ok(append_history(&history_path, t)?)
    };

    let outcome = match synthetic_noise {
        Some(noise) => {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "--noise must be a non-negative number"
                )));
            }
            let seed = cfg.tpe.seed;
            tune(
                existing,
                &cfg.space,
                n_trials,
                &cfg.tpe,
                |lr, i| {
                    let y = synthetic_objective(lr, noise, &mut rng_for(seed, &[0xAB, i as u64]));
                    Ok::<_, Failure>(Trial::new(lr, vec![y], seed))
                },
                record,
            )?
        }
        None => {
            let text = text_encoder(cfg)?;
            let corpus = config_corpus(cfg, train, "train")?;
            require_non_empty(&corpus)?;
            let folds = make_folds(&corpus, cfg.folds, derive_seed(cfg.seed, &[FOLD_STREAM]))
                .map_err(data)?;
            let base = base_encoder(cfg, &text)?;
            let learner = TriLearner {
                base: &base,
                text: &text,
                config: cfg.train.clone(),
            };
            tune(
                existing,
                &cfg.space,
                n_trials,
                &cfg.tpe,
                |lr, _| {
                    Ok::<_, Failure>(cv_objective(
                        &learner,
                        lr,
                        &corpus,
                        &folds,
                        cfg.train.seed,
                        cfg.objective,
                    )?)
                },
                record,
            )?
        }
    };

    let best = &outcome.best;
    println!(
        "{} trials; best lr {:.3e} with objective {:.4}",
        outcome.history.len(),
        best.lr,
        best.objective
    );
    write_json(&out.join("best_trial.json"), best)?;
    cfg.write_resolved(&out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ScoreJson {
    acc: f64,
    pre: f64,
    rec: f64,
    f1: f64,
}

/// Machine-readable twin of [`render_report`].
pub fn report_json(r: &EvaluationReport) -> serde_json::Value {
    let score = |c: &feedback_miner_core::ClassReport| ScoreJson {
        acc: c.accuracy,
        pre: c.precision,
        rec: c.recall,
        f1: c.f1,
    };
    serde_json::json!({
        "mode": r.mode,
        "classes": label_map(|l| score(&r.classes[l])),
        "macro": score(&r.macro_avg),
        "accuracy": r.accuracy,
        "counts": label_map(|l| r.counts[l]),
        "n_test": r.n_test,
    })
}

fn emit_report(
    out: Option<&Path>,
    eval: &Evaluation,
    mode: ScoringMode,
    header: Option<serde_json::Value>,
) -> Result<(), Failure> {
    let report = eval.get(mode);
    let text = render_report(report);
    let mut json = serde_json::json!({
        "selected": report_json(report),
        "binary": report_json(&eval.binary),
        "fused": report_json(&eval.fused),
    });
    if let Some(serde_json::Value::Object(extra)) = header {
        json.as_object_mut().unwrap().extend(extra);
    }
    print!("{text}");
    match out {
        Some(dir) => {
            write_file(&dir.join("report.txt"), text.as_bytes())?;
            write_json(&dir.join("report.json"), &json)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&json).map_err(runtime)?),
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &RunConfig,
    config_given: bool,
    bundle: &Path,
    test: Option<PathBuf>,
    mode: ScoringMode,
) -> Result<(), Failure> {
    let (manifest, classifier) = load_bundle(bundle)?;
    if config_given {
        if let Some(vocab_path) = &cfg.vocab {
            if load_vocab(vocab_path)?.tokens() != classifier.text.vocab.tokens() {
                return Err(data(anyhow::anyhow!(
                    "bundle vocabulary differs from configured {}",
                    vocab_path.display()
                )));
            }
        }
        if cfg.tokenizer.max_len != manifest.tokenizer.max_len {
            return Err(data(anyhow::anyhow!(
                "bundle sequence length {} differs from configured {}",
                manifest.tokenizer.max_len,
                cfg.tokenizer.max_len
            )));
        }
    }
    let test = config_corpus(cfg, test, "test")?;
    require_non_empty(&test)?;
    let eval = evaluate(&classifier, &test)?;
    if let Some(out) = &cfg.out {
        cfg.write_resolved(out)?;
    }
    emit_report(
        cfg.out.as_deref(),
        &eval,
        mode,
        Some(serde_json::json!({ "test_corpus": test.name() })),
    )
}

#[derive(Serialize)]
struct PredictOutput<'a> {
    id: &'a str,
    probs: BTreeMap<Label, f64>,
    label: Label,
}

fn cmd_predict(cfg: &RunConfig, bundle: &Path, input: &Path) -> Result<(), Failure> {
    let (_, classifier) = load_bundle(bundle)?;
    let file = fs::File::open(input).map_err(|e| DataError::io(input, e))?;
    let (records, bad) = parse_predict_input(file, input)?;
    let mut lines = String::new();
    for (_, r) in &records {
        let p = classifier.predict(&r.text)?;
        let out = PredictOutput {
            id: &r.id,
            probs: label_map(|l| p.probs[l]),
            label: p.label,
        };
        lines.push_str(&serde_json::to_string(&out).map_err(runtime)?);
        lines.push('\n');
    }
    match &cfg.out {
        Some(dir) => {
            write_file(&dir.join("predictions.jsonl"), lines.as_bytes())?;
            cfg.write_resolved(dir)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(lines.as_bytes()).map_err(runtime)?;
        }
    }
    for le in &bad {
        eprintln!("{}:{}: {}", input.display(), le.line, le.message);
    }
    if !bad.is_empty() {
        return Err(data(anyhow::anyhow!(
            "{} malformed input line(s) skipped",
            bad.len()
        )));
    }
    log::info!("labeled {} comments", records.len());
    Ok(())
}

fn cmd_experiment(
    cfg: &RunConfig,
    label: Option<String>,
    train: Vec<PathBuf>,
    test: Option<PathBuf>,
    mode: ScoringMode,
) -> Result<(), Failure> {
    let label = label
        .or_else(|| (!cfg.experiment.label.is_empty()).then(|| cfg.experiment.label.clone()))
        .unwrap_or_else(|| "experiment".into());
    let train_paths = if train.is_empty() {
        cfg.experiment.train_corpora.clone()
    } else {
        train
    };
    if train_paths.is_empty() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "experiment {label:?} has no training corpora"
        )));
    }
    let test_path = test
        .or_else(|| cfg.experiment.test_corpus.clone())
        .ok_or_else(|| {
            Failure::Usage(anyhow::anyhow!("experiment {label:?} has no test corpus"))
        })?;
    let out = cfg.out_dir()?.to_path_buf();
    let text = text_encoder(cfg)?;

    let parts = train_paths
        .iter()
        .map(|p| load_corpus(p, None))
        .collect::<Result<Vec<_>, _>>()?;
    let corpus =
        Corpus::concat(label.clone(), &parts, derive_seed(cfg.seed, &[0xC0_4CA7])).map_err(data)?;
    require_non_empty(&corpus)?;
    // The test corpus is used exactly as given: never re-split.
    let test = load_corpus(&test_path, None)?;
    require_non_empty(&test)?;

    let train_unk = unk_rate(&corpus, &text);
    let test_unk = unk_rate(&test, &text);
    let mut warnings = Vec::new();
    for (name, rate) in [("training", train_unk), ("test", test_unk)] {
        if rate > UNK_WARNING_RATE {
            let w = format!(
                "{:.1}% of {name} tokens are unknown to the vocabulary (threshold {:.0}%); it may not cover this language",
                100.0 * rate,
                100.0 * UNK_WARNING_RATE
            );
            log::warn!("{w}");
            warnings.push(w);
        }
    }

    let base = base_encoder(cfg, &text)?;
    let result = train_pipeline(cfg, &corpus, &base, &text)?;
    write_training_outputs(&out, &result, &text)?;
    let eval = evaluate(&result.classifier, &test)?;
    cfg.write_resolved(&out)?;
    println!("experiment: {label}");
    let header = serde_json::json!({
        "experiment": label,
        "train_corpora": parts.iter().map(|p| p.name()).collect::<Vec<_>>(),
        "test_corpus": test.name(),
        "unk_rate": { "train": train_unk, "test": test_unk },
        "warnings": warnings,
    });
    emit_report(Some(&out), &eval, mode, Some(header))
}
