//! Command-line interface. Exit status: 0 on success, 1 on usage errors,
//! 2 on data or artifact errors.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{self, BackgroundFilter, LogFormat, PrefixSample, QueryRecord, SplitPolicy};
use crate::decoder::DecoderConfig;
use crate::engine::{build_engine, ArtifactPaths, Engine, Strategy, SuggestRequest};
use crate::eval::{self, EvalConfig};
use crate::features::{self, UserTrainConfig, UserTrainMode, VectorTable, Word2VecConfig};
use crate::lm::{self, Activation, LmModel, ModelSpec, TrainConfig, TrainingExample, Vocabulary};
use crate::mpc::CountedTrie;
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "nqac", version, about = "Neural query auto-completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a raw tab-separated query log.
    Ingest(IngestArgs),
    /// Split normalized records into background, train, validation and test.
    Split(SplitArgs),
    /// Build the popularity trie from background counts.
    BuildTrie(BuildTrieArgs),
    /// Train word embeddings on background queries.
    TrainEmbeddings(EmbeddingArgs),
    /// Train user vectors on background histories.
    TrainUsers(UserArgs),
    /// Train the character language model.
    TrainLm(TrainLmArgs),
    /// MRR and latency over a test set of prefix samples.
    Eval(EvalArgs),
    /// Print ranked completions for one prefix.
    Suggest(SuggestArgs),
    /// Run the HTTP suggest service.
    Serve(ServeArgs),
    /// Time suggest calls over a set of prefixes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    user_column: usize,
    #[arg(long, default_value_t = 1)]
    query_column: usize,
    #[arg(long, default_value_t = 2)]
    time_column: usize,
    #[arg(long, default_value = corpus::TIMESTAMP_FORMAT)]
    time_format: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Random,
    Chronological,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Normalized records (output of ingest).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    policy: Policy,
    /// Background, train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.7, 0.1, 0.1, 0.1])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    min_count: u64,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
}

#[derive(Debug, Args)]
struct BuildTrieArgs {
    /// query<TAB>count lines.
    #[arg(long, required_unless_present = "records", conflicts_with = "records")]
    counts: Option<PathBuf>,
    /// Normalized records; counted and filtered with --min-count/--max-len.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    min_count: u64,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    #[arg(long)]
    background: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    negative: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Export input vectors only.
    #[arg(long)]
    input_vectors_only: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UserMode {
    Stochastic,
    FullBatch,
}

#[derive(Debug, Args)]
struct UserArgs {
    #[arg(long)]
    background: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = features::USER_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, value_enum, default_value = "stochastic")]
    mode: UserMode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use only each user's most recent queries.
    #[arg(long)]
    history_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Args)]
struct TrainLmArgs {
    /// Prefix samples; each distinct (target, user, time) is one training query.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Word embeddings for the previous-word slot.
    #[arg(long)]
    words: Option<PathBuf>,
    /// User vectors for the user slot.
    #[arg(long)]
    users: Option<PathBuf>,
    #[arg(long)]
    no_time: bool,
    #[arg(long, default_value_t = 1024)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    #[arg(long, default_value_t = 1)]
    min_char_count: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0.5)]
    clip: f64,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Stop once the epoch's training loss per character falls below this.
    #[arg(long)]
    stop_below: Option<f64>,
    /// Per-epoch JSON lines.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ArtifactArgs {
    #[arg(long)]
    trie: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long)]
    users: Option<PathBuf>,
}

impl ArtifactArgs {
    fn paths(&self) -> ArtifactPaths {
        ArtifactPaths { trie: self.trie.clone(), model: self.model.clone(), words: self.words.clone(), users: self.users.clone() }
    }

    fn any(&self) -> bool {
        self.trie.is_some() || self.model.is_some()
    }
}

#[derive(Debug, Args)]
struct DecoderArgs {
    #[arg(long, default_value_t = 10)]
    beam_width: usize,
    /// Generated characters, end marker included.
    #[arg(long, default_value_t = 40)]
    max_len: usize,
    /// Diversity weight for neural_diverse.
    #[arg(long, default_value_t = 1.0)]
    diversity: f64,
}

impl DecoderArgs {
    fn config(&self, k: usize) -> DecoderConfig {
        DecoderConfig { beam_width: self.beam_width.max(k), max_len: self.max_len, diversity: self.diversity, k }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    artifacts: ArtifactArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// One or more strategies; paired t-tests compare each with the first.
    #[arg(long, value_delimiter = ',', default_value = "routed")]
    strategy: Vec<Strategy>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    passes: usize,
    /// Evaluate only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// MRR of neural_diverse for each diversity weight.
    #[arg(long, value_delimiter = ',')]
    lambda_sweep: Vec<f64>,
}

#[derive(Debug, Args)]
struct SuggestArgs {
    #[arg(long)]
    prefix: String,
    #[arg(long)]
    user: Option<String>,
    /// "YYYY-MM-DD HH:MM:SS" or ISO-8601.
    #[arg(long)]
    time: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "routed")]
    strategy: Strategy,
    #[command(flatten)]
    artifacts: ArtifactArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// TOML service configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    listen: Option<String>,
    #[command(flatten)]
    artifacts: ArtifactArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Prefix samples to draw prefixes from.
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    artifacts: ArtifactArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long, default_value = "routed")]
    strategy: Strategy,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    passes: usize,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_errors!(
    std::io::Error,
    corpus::CorpusError,
    crate::mpc::TrieError,
    features::FeatureError,
    lm::LmError,
    crate::decoder::DecoderError,
    crate::engine::EngineError,
    eval::EvalError,
    service::ServiceError,
    serde_json::Error
);

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_records(path: &Path) -> Result<Vec<QueryRecord>> {
    let (records, report) = corpus::parse_log(open(path)?, &LogFormat::default())?;
    if report.malformed > 0 {
        tracing::warn!(path = %path.display(), malformed = report.malformed, "skipped malformed lines");
    }
    Ok(records)
}

fn read_samples(path: &Path, limit: Option<usize>) -> Result<Vec<PrefixSample>> {
    let mut samples = corpus::read_samples(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(n) = limit {
        samples.truncate(n);
    }
    Ok(samples)
}

fn engine(artifacts: &ArtifactArgs, decoder: DecoderConfig) -> Result<Engine> {
    if !artifacts.any() {
        return Err(CliError::Usage("give --trie, --model or both".into()));
    }
    Ok(build_engine(&artifacts.paths(), decoder)?)
}

/// Parse `argv` (program name first) and run; returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, out),
        Command::Split(a) => split(a, out),
        Command::BuildTrie(a) => build_trie(a, out),
        Command::TrainEmbeddings(a) => train_embeddings(a, out),
        Command::TrainUsers(a) => train_users(a, out),
        Command::TrainLm(a) => train_lm(a, out),
        Command::Eval(a) => run_eval(a, out),
        Command::Suggest(a) => suggest(a, out),
        Command::Serve(a) => serve(a),
        Command::Bench(a) => bench(a, out),
    }
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let format = LogFormat { user_column: a.user_column, query_column: a.query_column, time_column: a.time_column, time_format: a.time_format };
    let (records, report) = corpus::parse_log(open(&a.input)?, &format)?;
    let mut w = create(&a.output)?;
    corpus::write_records(&mut w, &records)?;
    w.flush()?;
    writeln!(out, "lines {}\trecords {}\tmalformed {}\theader {}", report.lines, report.records, report.malformed, report.header_skipped)?;
    Ok(())
}

fn split(a: SplitArgs, out: &mut dyn Write) -> Result<()> {
    let fractions: [f64; 4] = a.fractions.clone().try_into().map_err(|_| CliError::Usage("--fractions takes four values".into()))?;
    let policy = match a.policy {
        Policy::Random => SplitPolicy::Random { fractions, seed: a.seed },
        Policy::Chronological => SplitPolicy::Chronological { fractions },
    };
    let records = read_records(&a.input)?;
    let split = corpus::split_dataset(&records, &policy, BackgroundFilter { min_count: a.min_count, max_len: a.max_len }).map_err(|e| match e {
        corpus::CorpusError::Policy(m) => CliError::Usage(m),
        e => e.into(),
    })?;
    std::fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    let mut w = create(&dir.join("background.tsv"))?;
    corpus::write_records(&mut w, &split.background)?;
    w.flush()?;
    let mut w = create(&dir.join("background_counts.tsv"))?;
    corpus::write_counts(&mut w, &split.background_counts)?;
    w.flush()?;
    for (name, samples) in [("train.tsv", &split.train), ("validation.tsv", &split.validation), ("test.tsv", &split.test)] {
        let mut w = create(&dir.join(name))?;
        corpus::write_samples(&mut w, samples)?;
        w.flush()?;
    }
    let [b, t, v, s] = split.sizes;
    writeln!(out, "records background {b} train {t} validation {v} test {s}")?;
    writeln!(
        out,
        "prefixes train {} validation {} test {}; background queries kept {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.background_counts.len()
    )?;
    Ok(())
}

fn build_trie(a: BuildTrieArgs, out: &mut dyn Write) -> Result<()> {
    let counts = match (&a.counts, &a.records) {
        (Some(p), _) => corpus::read_counts(open(p)?)?,
        (None, Some(p)) => corpus::filter_background(&read_records(p)?, a.min_count, a.max_len),
        (None, None) => return Err(CliError::Usage("give --counts or --records".into())),
    };
    let trie = CountedTrie::build(&counts);
    trie.save(&a.output)?;
    writeln!(out, "queries {}\tnodes {}\ttotal count {}", counts.len(), trie.node_count(), trie.total())?;
    Ok(())
}

fn train_embeddings(a: EmbeddingArgs, out: &mut dyn Write) -> Result<()> {
    let queries: Vec<String> = read_records(&a.background)?.into_iter().map(|r| r.query).collect();
    let config = Word2VecConfig {
        dim: a.dim,
        window: a.window,
        epochs: a.epochs,
        negative_samples: a.negative,
        learning_rate: a.lr,
        seed: a.seed,
        sum_output_vectors: !a.input_vectors_only,
    };
    let table = features::train_word_embeddings(&queries, &config)?;
    table.save(&a.output)?;
    writeln!(out, "words {}\tdim {}", table.len(), table.dim())?;
    Ok(())
}

fn train_users(a: UserArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_records(&a.background)?;
    let histories = corpus::user_histories(&records, a.history_limit);
    let mode = match a.mode {
        UserMode::Stochastic => UserTrainMode::Stochastic,
        UserMode::FullBatch => UserTrainMode::FullBatch,
    };
    let config = UserTrainConfig { dim: a.dim, epochs: a.epochs, learning_rate: a.lr, mode, seed: a.seed };
    let trained = features::train_user_vectors(&histories, &config)?;
    trained.table.save(&a.output)?;
    writeln!(out, "users {}\tdim {}\tobjective {:.6}", trained.table.len(), trained.table.dim(), trained.objective.last().copied().unwrap_or(f64::NAN))?;
    Ok(())
}

/// Each distinct (target, user, time) of a sample file, in first-seen order.
fn training_examples(samples: &[PrefixSample]) -> Vec<TrainingExample> {
    let mut seen = BTreeSet::new();
    samples
        .iter()
        .filter(|s| seen.insert((s.target.clone(), s.user_id.clone(), s.timestamp)))
        .map(|s| TrainingExample { query: s.target.clone(), user_id: Some(s.user_id.clone()), timestamp: Some(s.timestamp) })
        .collect()
}

fn train_lm(a: TrainLmArgs, out: &mut dyn Write) -> Result<()> {
    let train = training_examples(&read_samples(&a.train, None)?);
    let validation = match &a.validation {
        Some(p) => training_examples(&read_samples(p, None)?),
        None => Vec::new(),
    };
    let words = a.words.as_deref().map(VectorTable::load).transpose()?;
    let users = a.users.as_deref().map(VectorTable::load).transpose()?;
    let spec = ModelSpec {
        hidden: a.hidden,
        layers: a.layers,
        word_dim: words.as_ref().map_or(0, VectorTable::dim),
        user_dim: users.as_ref().map_or(0, VectorTable::dim),
        time_dim: if a.no_time { 0 } else { features::TIME_DIM },
        activation: match a.activation {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        },
    };
    let queries: Vec<&str> = train.iter().map(|e| e.query.as_str()).collect();
    let vocab = Vocabulary::build(&queries, a.min_char_count);
    let mut model = LmModel::new(spec, vocab, a.seed)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        clip_norm: a.clip,
        dropout: a.dropout,
        seed: a.seed,
        max_len: a.max_len,
        stop_below: a.stop_below,
        ..Default::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut metrics = a.metrics.as_deref().map(create).transpose()?;
    let report = lm::train(&mut model, &train, &validation, words.as_ref(), users.as_ref(), &config, metrics.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(w) = metrics.as_mut() {
        w.flush()?;
    }
    model.save(&a.output)?;
    writeln!(out, "queries {}\tparameters {}\tvocabulary {}", train.len(), model.param_count(), model.vocab().len())?;
    if let Some(last) = report.history.last() {
        let val = last.val_loss_per_char.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(out, "final train loss/char {:.4}\tvalidation loss/char {val}", last.train_loss_per_char)?;
    }
    Ok(())
}

fn run_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let samples = read_samples(&a.test, a.limit)?;
    let engine = engine(&a.artifacts, a.decoder.config(a.k))?;
    let mut reports = Vec::new();
    for &strategy in &a.strategy {
        let config = EvalConfig { strategy, k: a.k, passes: a.passes };
        reports.push(eval::evaluate(&engine, &samples, &config)?);
    }
    write!(out, "{}", eval::format_table(&reports))?;
    let mut tests = Vec::new();
    if let Some((first, rest)) = reports.split_first() {
        for r in rest {
            let t = eval::paired_t_test(&r.reciprocal_ranks, &first.reciprocal_ranks);
            match &t {
                Some(t) => writeln!(out, "{} vs {}: mean diff {:+.4}, t = {:.3}, p = {:.4}", r.strategy, first.strategy, t.mean_difference, t.t, t.p_value)?,
                None => writeln!(out, "{} vs {}: no variation in paired differences", r.strategy, first.strategy)?,
            }
            tests.push(serde_json::json!({ "a": r.strategy, "b": first.strategy, "test": t }));
        }
    }
    let mut sweep = Vec::new();
    for &lambda in &a.lambda_sweep {
        let tuned = engine.with_decoder(DecoderConfig { diversity: lambda, ..engine.decoder().clone() })?;
        let r = eval::evaluate(&tuned, &samples, &EvalConfig { strategy: Strategy::NeuralDiverse, k: a.k, passes: 0 })?;
        writeln!(out, "diversity {lambda}: MRR {:.4}", r.mrr_all)?;
        sweep.push(serde_json::json!({ "diversity": lambda, "mrr": r.mrr_all }));
    }
    if let Some(path) = &a.json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "reports": reports, "t_tests": tests, "diversity_sweep": sweep }))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn suggest(a: SuggestArgs, out: &mut dyn Write) -> Result<()> {
    let timestamp = match &a.time {
        Some(t) => Some(service::parse_iso_time(t).ok_or_else(|| CliError::Usage(format!("cannot parse --time {t:?}")))?),
        None => None,
    };
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let engine = engine(&a.artifacts, a.decoder.config(a.k))?;
    let request = SuggestRequest { prefix: a.prefix, user_id: a.user, timestamp, k: a.k, strategy: a.strategy };
    let response = engine.suggest(&request).map_err(|e| match e {
        crate::engine::EngineError::Request(m) => CliError::Usage(m),
        e => e.into(),
    })?;
    for (i, s) in response.suggestions.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", i + 1, s.text, s.score)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(l) = a.listen {
        config.listen = l;
    }
    let overrides = a.artifacts.paths();
    let paths = &mut config.artifacts;
    for (slot, value) in
        [(&mut paths.trie, overrides.trie), (&mut paths.model, overrides.model), (&mut paths.words, overrides.words), (&mut paths.users, overrides.users)]
    {
        if value.is_some() {
            *slot = value;
        }
    }
    if config.artifacts.trie.is_none() && config.artifacts.model.is_none() {
        return Err(CliError::Usage("no artifacts configured; give --config or --trie/--model".into()));
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(config, service::shutdown_signal()))?;
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let samples = read_samples(&a.test, a.limit)?;
    if samples.is_empty() {
        return Err(CliError::Data("no prefixes to benchmark".into()));
    }
    let engine = engine(&a.artifacts, a.decoder.config(a.k))?;
    let mut timings = Vec::with_capacity(samples.len() * a.passes);
    for _ in 0..a.passes {
        for s in &samples {
            let request =
                SuggestRequest { prefix: s.prefix.clone(), user_id: Some(s.user_id.clone()), timestamp: Some(s.timestamp), k: a.k, strategy: a.strategy };
            let start = Instant::now();
            engine.suggest(&request)?;
            timings.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let mean = timings.iter().sum::<f64>() / timings.len().max(1) as f64;
    let summary = serde_json::json!({
        "strategy": a.strategy,
        "prefixes": samples.len(),
        "passes": a.passes,
        "mean_ms": mean,
        "p50_ms": eval::percentile(&timings, 50.0),
        "p95_ms": eval::percentile(&timings, 95.0),
        "max_ms": timings.iter().copied().fold(0.0, f64::max),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
