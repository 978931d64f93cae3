//! Command-line front end: training, evaluation, tagging, tree extraction,
//! synthetic data and analyses.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nldm::analysis;
use nldm::data::{self, Corpus, LabelSet, Sentence, SynthConfig, TaggedSentence};
use nldm::encoder::{self, Vocab};
use nldm::models::{self, Model, ModelConfig, Variant};
use nldm::scoring::{ScorerKind, Topology};
use nldm::train::{self, Checkpoint, EpochLog, TrainConfig};

pub use config::{config_args, parse_config, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nldm::Error),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(nldm::Error::InvalidArgument(_)) => EXIT_USAGE,
            CliError::Core(nldm::Error::Numeric(_)) => EXIT_NUMERIC,
            CliError::Core(_) | CliError::Output(_) => EXIT_DATA,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "nldm", version, about = "Sequence labeling with latent dependency trees over labels")]
pub struct Cli {
    /// File of `key = value` lines applied before the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a checkpoint plus a per-epoch log.
    Train(TrainCmd),
    /// Print tagging accuracy of a checkpoint on a labeled corpus.
    Eval(EvalCmd),
    /// Tag a corpus, writing token<TAB>label lines.
    Predict(PredictCmd),
    /// Print the induced dependency forest of every sentence.
    Parse(PredictCmd),
    /// Write a synthetic corpus as train/dev/test TSV files.
    Generate(GenerateCmd),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckCmd),
    /// Dependency-length histograms, attachment scores and length-limit sweeps.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    Histogram(HistogramCmd),
    Uas(UasCmd),
    Ksweep(KsweepCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// By extension: .conllu/.conll or TSV.
    Auto,
    Conllu,
    Tsv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Nldm,
    Softmax,
    Crf1,
    Crf2,
}

impl From<ModelKind> for Variant {
    fn from(m: ModelKind) -> Self {
        match m {
            ModelKind::Nldm => Variant::Nldm,
            ModelKind::Softmax => Variant::Softmax,
            ModelKind::Crf1 => Variant::Crf1,
            ModelKind::Crf2 => Variant::Crf2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Additive,
    Trilinear,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Additive => ScorerKind::Additive,
            ScorerArg::Trilinear => ScorerKind::Trilinear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    Full,
    RootOnly,
    ChainOnly,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Full => Topology::Full,
            TopologyArg::RootOnly => Topology::RootOnly,
            TopologyArg::ChainOnly => Topology::ChainOnly,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Nldm)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = ScorerArg::Additive)]
    pub scorer: ScorerArg,
    /// Longest non-root dependency.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub d_x: usize,
    #[arg(long, default_value_t = 50)]
    pub d_h: usize,
    #[arg(long, default_value_t = 20)]
    pub d_l: usize,
    #[arg(long, default_value_t = 20)]
    pub d_r: usize,
    /// L2 coefficient.
    #[arg(long, default_value_t = 0.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
    #[arg(long, value_enum, default_value_t = TopologyArg::Full)]
    pub topology: TopologyArg,
}

impl ModelArgs {
    fn config(&self, num_labels: usize, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant: self.model.into(),
            scorer: self.scorer.into(),
            num_labels,
            vocab_size,
            d_x: self.d_x,
            d_h: self.d_h,
            d_l: self.d_l,
            d_r: self.d_r,
            k: self.k,
            omega: self.omega,
            topology: self.topology.into(),
            init_scale: self.init_scale,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clip gradients to this norm; the bare flag uses 5.
    #[arg(long, num_args = 0..=1, value_name = "NORM")]
    pub clip: Option<Option<f64>>,
}

impl TrainArgs {
    fn config(&self, threads: usize) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            clip: self.clip.map(|c| c.unwrap_or(TrainConfig::DEFAULT_CLIP)),
            threads,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,
    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-epoch TSV log; defaults to the checkpoint path plus `.log.tsv`.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Words rarer than this in training map to the unknown token.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Pretrained word vectors (`word v1 .. vd` lines) of dimension `--d-x`.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train_args: TrainArgs,
}

#[derive(Args, Debug)]
pub struct EvalCmd {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PredictCmd {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Output file instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateCmd {
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 5)]
    pub num_labels: usize,
    #[arg(long, default_value_t = 1000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 10)]
    pub max_len: usize,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GradcheckCmd {
    #[arg(long, value_enum, default_value_t = ModelKind::Nldm)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = ScorerArg::Additive)]
    pub scorer: ScorerArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Every hidden and embedding size.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Coordinates checked; larger models are sampled.
    #[arg(long, default_value_t = 500)]
    pub max_coords: usize,
    /// Exit with status 3 when the error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Labeled corpus to check on instead of the built-in toy sentences.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct HistogramCmd {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Tree model whose decoded forests are measured.
    #[arg(long, value_name = "PATH", required_unless_present = "gold", conflicts_with = "gold")]
    pub checkpoint: Option<PathBuf>,
    /// Measure the corpus's own heads instead.
    #[arg(long)]
    pub gold: bool,
    /// Aligned table instead of TSV.
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Args, Debug)]
pub struct UasCmd {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Corpus with gold heads.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct KsweepCmd {
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,15")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train_args: TrainArgs,
}

/// The clap command with repeated flags allowed; the last one wins, so
/// command-line flags override config-file entries.
pub fn command() -> clap::Command {
    fn relax(cmd: clap::Command) -> clap::Command {
        cmd.args_override_self(true).mut_subcommands(relax)
    }
    relax(Cli::command())
}

/// Splices the `--config` file's flags in right after the subcommand.
pub fn expand_config(args: Vec<String>) -> CliResult<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            path = args.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| nldm::Error::io(&path, e))?;
    let entries = parse_config(&text).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;

    // find the leaf subcommand, skipping global flags before it
    let mut insert_at = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--config" || a == "--threads" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        insert_at = Some(i + 1);
        if a == "analyze" {
            if let Some(leaf) = args[i + 1..].iter().position(|a| !a.starts_with('-')) {
                insert_at = Some(i + 1 + leaf + 1);
            }
        }
        break;
    }
    let Some(at) = insert_at else {
        return Ok(args);
    };
    let mut out = args[..at].to_vec();
    out.extend(config_args(&entries));
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status. Results go to `out`; diagnostics go to standard error.
pub fn run(args: Vec<String>, out: &mut (dyn Write + Send)) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match command()
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let threads = cli.threads;
    pool.install(|| match cli.command {
        Command::Train(c) => cmd_train(c, threads, out),
        Command::Eval(c) => cmd_eval(c, out),
        Command::Predict(c) => cmd_predict(c, out),
        Command::Parse(c) => cmd_parse(c, out),
        Command::Generate(c) => cmd_generate(c, out),
        Command::Gradcheck(c) => cmd_gradcheck(c, out),
        Command::Analyze(AnalyzeCmd::Histogram(c)) => cmd_histogram(c, out),
        Command::Analyze(AnalyzeCmd::Uas(c)) => cmd_uas(c, out),
        Command::Analyze(AnalyzeCmd::Ksweep(c)) => cmd_ksweep(c, threads, out),
    })
}

fn load(path: &Path, format: Format) -> CliResult<Corpus> {
    let corpus = match format {
        Format::Auto => data::load_corpus(path)?,
        Format::Conllu => data::load_conllu(path)?,
        Format::Tsv => data::load_tsv(path)?,
    };
    if corpus.is_empty() {
        return Err(nldm::Error::Data(format!("{}: no sentences", path.display())).into());
    }
    Ok(corpus)
}

/// Fails early if `path` cannot be created because its directory is missing.
fn check_output(path: &Path) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(nldm::Error::Data(format!("output directory {} does not exist", parent.display())).into());
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| nldm::Error::io(path, e))?;
    Ok(())
}

/// Token ids only, with placeholder labels, for decoding.
fn token_sentences(corpus: &[TaggedSentence], vocab: &Vocab) -> CliResult<Vec<Sentence>> {
    corpus
        .iter()
        .map(|s| {
            let tokens: Vec<usize> = s.words.iter().map(|w| vocab.id(w)).collect();
            let n = tokens.len();
            Ok(Sentence::new(tokens, vec![0; n], s.heads.clone())?)
        })
        .collect()
}

fn log_header() -> &'static str {
    "epoch\ttrain_loss\tdev_accuracy\tparam_norm\n"
}

fn log_line(log: &EpochLog) -> String {
    format!("{}\t{}\t{}\t{}\n", log.epoch, log.train_loss, log.dev_accuracy, log.param_norm)
}

struct Prepared {
    vocab: Vocab,
    labels: LabelSet,
    train: Vec<Sentence>,
    dev: Vec<Sentence>,
}

fn prepare(train_path: &Path, dev_path: &Path, format: Format, min_count: usize) -> CliResult<Prepared> {
    let train_c = load(train_path, format)?;
    let dev_c = load(dev_path, format)?;
    let (vocab, labels) = data::build_vocab(&train_c, min_count)?;
    let train = data::index_corpus(&train_c, &vocab, &labels)?;
    let dev = data::index_corpus(&dev_c, &vocab, &labels)
        .map_err(|e| nldm::Error::Data(format!("{}: {e}", dev_path.display())))?;
    Ok(Prepared { vocab, labels, train, dev })
}

fn cmd_train(c: TrainCmd, threads: usize, out: &mut (dyn Write + Send)) -> CliResult<()> {
    check_output(&c.out)?;
    let log_path = c.log.clone().unwrap_or_else(|| {
        let mut p = c.out.clone().into_os_string();
        p.push(".log.tsv");
        PathBuf::from(p)
    });
    check_output(&log_path)?;
    if let Some(e) = &c.embeddings {
        if !e.is_file() {
            return Err(nldm::Error::Data(format!("embeddings file {} not found", e.display())).into());
        }
    }
    let p = prepare(&c.train, &c.dev, c.format, c.min_count)?;
    let config = c.model.config(p.labels.len(), p.vocab.len());
    let cfg = c.train_args.config(threads);
    config.validate()?;
    cfg.validate()?;

    let mut log = String::from(log_header());
    out.write_all(log_header().as_bytes())?;
    let mut write_err = None;
    let mut on_epoch = |e: &EpochLog| {
        let line = log_line(e);
        if let Err(err) = out.write_all(line.as_bytes()) {
            write_err.get_or_insert(err);
        }
        log.push_str(&line);
    };
    let outcome = match &c.embeddings {
        Some(path) => {
            let mut model = Model::new(config, cfg.seed)?;
            let found = encoder::load_pretrained_embeddings(path, &p.vocab, &mut model.params)?;
            eprintln!("pretrained vectors for {found} of {} words", p.vocab.len());
            train::train_from(model, &p.train, &p.dev, &cfg, &mut on_epoch)?
        }
        None => train::train_with(&config, &p.train, &p.dev, &cfg, &mut on_epoch)?,
    };
    if let Some(err) = write_err {
        return Err(err.into());
    }
    write_file(&log_path, &log)?;
    let best = outcome.history[outcome.best_epoch - 1].dev_accuracy;
    Checkpoint {
        model: outcome.model,
        vocab: p.vocab,
        labels: p.labels,
        train: Some(cfg),
        history: outcome.history,
    }
    .save(&c.out)?;
    eprintln!(
        "best epoch {} (dev accuracy {best:.2}); wrote {} and {}",
        outcome.best_epoch,
        c.out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_eval(c: EvalCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let ckpt = Checkpoint::load(&c.checkpoint)?;
    let corpus = load(&c.data, c.format)?;
    let data = data::index_corpus(&corpus, &ckpt.vocab, &ckpt.labels).map_err(|e| {
        nldm::Error::Data(format!("{} does not match checkpoint {}: {e}", c.data.display(), c.checkpoint.display()))
    })?;
    let acc = train::evaluate(&ckpt.model, &data)?;
    writeln!(out, "accuracy\t{acc:.4}")?;
    Ok(())
}

fn emit(path: Option<&Path>, text: &str, out: &mut (dyn Write + Send)) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn cmd_predict(c: PredictCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    if let Some(p) = &c.out {
        check_output(p)?;
    }
    let ckpt = Checkpoint::load(&c.checkpoint)?;
    let corpus = load(&c.data, c.format)?;
    let data = token_sentences(&corpus, &ckpt.vocab)?;
    let predictions = train::predict_all(&ckpt.model, &data)?;
    let tagged: Vec<TaggedSentence> = corpus
        .iter()
        .zip(&predictions)
        .map(|(s, pred)| TaggedSentence {
            words: s.words.clone(),
            labels: pred
                .iter()
                .map(|&y| ckpt.labels.name(y).unwrap_or("?").to_string())
                .collect(),
            heads: None,
        })
        .collect();
    emit(c.out.as_deref(), &data::write_tsv(&tagged), out)
}

fn require_tree_model(model: &Model, path: &Path) -> CliResult<()> {
    if model.config.variant != Variant::Nldm {
        return Err(nldm::Error::Data(format!(
            "{} holds a {} model; trees need an nldm checkpoint",
            path.display(),
            model.config.variant
        ))
        .into());
    }
    Ok(())
}

fn cmd_parse(c: PredictCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    if let Some(p) = &c.out {
        check_output(p)?;
    }
    let ckpt = Checkpoint::load(&c.checkpoint)?;
    require_tree_model(&ckpt.model, &c.checkpoint)?;
    let corpus = load(&c.data, c.format)?;
    let forests = analysis::decode_all(&ckpt.model, &token_sentences(&corpus, &ckpt.vocab)?)?;
    let mut text = String::new();
    for f in &forests {
        let heads: Vec<String> = f.heads().iter().map(usize::to_string).collect();
        text.push_str(&heads.join("\t"));
        text.push('\n');
    }
    emit(c.out.as_deref(), &text, out)
}

fn cmd_generate(c: GenerateCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let config = SynthConfig {
        num_labels: c.num_labels,
        vocab_size: c.vocab_size,
        max_len: c.max_len,
        hidden: c.hidden,
        num_samples: c.num_samples,
        seed: c.seed,
        ..SynthConfig::default()
    };
    let corpus = data::generate_synthetic(&config)?;
    std::fs::create_dir_all(&c.out_dir).map_err(|e| nldm::Error::io(&c.out_dir, e))?;
    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        data::save_tsv(c.out_dir.join(format!("{name}.tsv")), split)?;
        writeln!(out, "{name}\t{}", split.len())?;
    }
    Ok(())
}

/// Built-in sentences for gradient checks: token ids below 6, labels below 3.
const TOY: [(&[usize], &[usize]); 3] = [(&[2, 4, 3], &[0, 1, 2]), (&[3, 5], &[1, 0]), (&[5, 2, 4, 3], &[2, 2, 0, 1])];

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn cmd_gradcheck(c: GradcheckCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let (data, num_labels, vocab_size) = match &c.data {
        Some(path) => {
            let corpus = load(path, c.format)?;
            let (vocab, labels) = data::build_vocab(&corpus, 1)?;
            (data::index_corpus(&corpus, &vocab, &labels)?, labels.len(), vocab.len())
        }
        None => {
            let data = TOY
                .iter()
                .map(|(t, l)| Sentence::new(t.to_vec(), l.to_vec(), None))
                .collect::<nldm::Result<Vec<_>>>()?;
            (data, 3, 6)
        }
    };
    let config = ModelConfig {
        variant: c.model.into(),
        scorer: c.scorer.into(),
        num_labels,
        vocab_size,
        d_x: c.dim,
        d_h: c.dim,
        d_l: c.dim,
        d_r: c.dim,
        k: c.k,
        omega: c.omega,
        topology: Topology::Full,
        init_scale: c.init_scale,
    };
    let store = models::init_params(&config, c.seed)?;
    let report = train::grad_check(&store, &config, &data, c.eps, c.max_coords, c.seed)?;
    writeln!(out, "max_rel_error\t{:e}", report.max_rel_error)?;
    writeln!(out, "coordinates\t{}", report.coordinates)?;
    if let Some((name, i)) = &report.worst {
        writeln!(out, "worst\t{name}[{i}]")?;
    }
    if !(report.max_rel_error <= c.tolerance) {
        return Err(nldm::Error::Numeric(format!(
            "relative error {:e} exceeds tolerance {:e}",
            report.max_rel_error, c.tolerance
        ))
        .into());
    }
    Ok(())
}

fn cmd_histogram(c: HistogramCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let corpus = load(&c.data, c.format)?;
    let hist = match &c.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            require_tree_model(&ckpt.model, path)?;
            let forests = analysis::decode_all(&ckpt.model, &token_sentences(&corpus, &ckpt.vocab)?)?;
            analysis::length_histogram(forests.iter().map(|f| f.heads()))?
        }
        None => {
            let heads = corpus
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.heads
                        .as_deref()
                        .ok_or_else(|| nldm::Error::Data(format!("sentence {} has no gold heads", i + 1)))
                })
                .collect::<nldm::Result<Vec<_>>>()?;
            analysis::length_histogram(heads)?
        }
    };
    if c.pretty {
        writeln!(out, "{hist}")?;
    } else {
        out.write_all(hist.to_tsv().as_bytes())?;
    }
    Ok(())
}

fn cmd_uas(c: UasCmd, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let ckpt = Checkpoint::load(&c.checkpoint)?;
    require_tree_model(&ckpt.model, &c.checkpoint)?;
    let corpus = load(&c.data, c.format)?;
    let data = token_sentences(&corpus, &ckpt.vocab)?;
    let gold = analysis::gold_heads(&data)?;
    let forests = analysis::decode_all(&ckpt.model, &data)?;
    writeln!(out, "uas\t{:.2}", analysis::uas(&forests, &gold)?)?;
    Ok(())
}

fn cmd_ksweep(c: KsweepCmd, threads: usize, out: &mut (dyn Write + Send)) -> CliResult<()> {
    if c.model.model != ModelKind::Nldm {
        return Err(CliError::Usage("k sweeps need --model nldm".into()));
    }
    if c.ks.is_empty() {
        return Err(CliError::Usage("--ks needs at least one value".into()));
    }
    let p = prepare(&c.train, &c.dev, c.format, c.min_count)?;
    let test_c = load(&c.test, c.format)?;
    let test = data::index_corpus(&test_c, &p.vocab, &p.labels)
        .map_err(|e| nldm::Error::Data(format!("{}: {e}", c.test.display())))?;
    let base = c.model.config(p.labels.len(), p.vocab.len());
    let rows = analysis::k_sweep(&base, &c.train_args.config(threads), &p.train, &p.dev, &test, &c.ks)?;
    out.write_all(analysis::k_sweep_tsv(&rows).as_bytes())?;
    Ok(())
}
