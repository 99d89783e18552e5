//! The `gramforge` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Results go to
//! standard output, diagnostics to standard error; `--json` switches both
//! to the JSON shapes the HTTP service uses.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gramforge::corpus::{CorpusStore, DocumentInfo};
use gramforge::eval::{self, synthetic::SyntheticCorpus, BenchmarkResult};
use gramforge::model::{ModelStats, NGramModel, MAX_ORDER};
use gramforge::predict::Predictor;
use gramforge::report::{to_json_line, CorpusListing, ErrorBody, PruneResponse};
use gramforge::smoothing::SmoothingMethod;
use gramforge::tokenizer::{self, TokenizerConfig, TokenizerMode};
use gramforge_service::{
    perplexity_with, predict_with, ApiError, PerplexityQuery, PredictQuery, ServiceConfig, Session,
};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const CORPUS_DIR: &str = "corpus";
const DEFAULT_MODEL: &str = "model.gf";

#[derive(Debug, Parser)]
#[command(
    name = "gramforge",
    version,
    about = "Build and query n-gram language models"
)]
pub struct Cli {
    /// Emit machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,

    /// Directory holding the persisted corpus and the default model.
    #[arg(
        long,
        global = true,
        env = "GRAMFORGE_WORKSPACE",
        default_value = ".gramforge"
    )]
    workspace: PathBuf,

    #[command(subcommand)]
    command: Command,
}

/// Every engine capability, one verb each.
pub const SUBCOMMANDS: &[&str] = &[
    "ingest",
    "corpus-list",
    "corpus-clear",
    "build",
    "update",
    "prune",
    "predict",
    "complete",
    "perplexity",
    "bench",
    "serve",
];

#[derive(Debug, Subcommand)]
enum Command {
    /// Add text files to the workspace corpus.
    Ingest {
        #[arg(long = "corpus", required = true)]
        corpus: Vec<PathBuf>,
        /// Tokenizer mode; only applies while the corpus is empty.
        #[arg(long)]
        mode: Option<TokenizerMode>,
    },
    /// List the workspace corpus.
    CorpusList,
    /// Remove every document from the workspace corpus.
    CorpusClear,
    /// Build a model from files, or from the workspace corpus.
    Build {
        #[arg(long, value_parser = parse_order)]
        n: usize,
        #[arg(long = "corpus")]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "word")]
        mode: TokenizerMode,
    },
    /// Add documents to an existing model.
    Update {
        #[arg(long = "corpus", required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "word")]
        mode: TokenizerMode,
    },
    /// Drop contexts whose total count is below a threshold.
    Prune {
        #[arg(long, allow_negative_numbers = true, value_parser = parse_threshold)]
        threshold: i64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the generated continuation of a prompt.
    Predict(QueryArgs),
    /// Print the prompt followed by its generated continuation.
    Complete(QueryArgs),
    /// Score text (from --prompt or --corpus files).
    Perplexity {
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long = "corpus")]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long, default_value = "word")]
        mode: TokenizerMode,
    },
    /// Time load+tokenize and builds (CSV), or tokenizer throughput.
    Bench {
        #[arg(long = "corpus")]
        corpus: Vec<PathBuf>,
        /// Orders to time; defaults to 1 through 4.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        n: Vec<u8>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u16).range(3..))]
        repetitions: u16,
        /// Measure tokenizer throughput instead of build times.
        #[arg(long)]
        throughput: bool,
        /// Synthetic text size for throughput runs without --corpus.
        #[arg(long, default_value_t = eval::MIN_THROUGHPUT_BYTES)]
        bytes: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "word")]
        mode: TokenizerMode,
    },
    /// Serve the HTTP API over the workspace corpus.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    count: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    top: u32,
    #[arg(long)]
    no_backoff: bool,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    #[arg(long, default_value = "word")]
    mode: TokenizerMode,
}

#[derive(Debug, Args)]
struct SmoothingArgs {
    /// mle, laplace, addk or good-turing.
    #[arg(long, value_parser = parse_smoothing_name)]
    smoothing: Option<String>,
    /// Add-k constant in (0, 1].
    #[arg(long, value_parser = parse_k)]
    k: Option<f64>,
}

fn parse_order(s: &str) -> Result<usize, String> {
    let n: usize = s
        .parse()
        .map_err(|_| format!("{s:?} is not a whole number"))?;
    if (1..=MAX_ORDER).contains(&n) {
        Ok(n)
    } else {
        Err(format!("n must be between 1 and {MAX_ORDER}"))
    }
}

fn parse_threshold(s: &str) -> Result<i64, String> {
    let t: i64 = s.parse().map_err(|_| format!("{s:?} is not an integer"))?;
    if t < 0 {
        Err("threshold must not be negative".into())
    } else {
        Ok(t)
    }
}

fn parse_smoothing_name(s: &str) -> Result<String, String> {
    SmoothingMethod::from_name(s, None)
        .map(|_| s.to_owned())
        .map_err(|e| e.to_string())
}

fn parse_k(s: &str) -> Result<f64, String> {
    let k: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    SmoothingMethod::AddK { k }
        .validate()
        .map_err(|e| e.to_string())?;
    Ok(k)
}

fn config_for(mode: TokenizerMode) -> TokenizerConfig {
    TokenizerConfig {
        mode,
        ..TokenizerConfig::default()
    }
}

/// A runtime failure: engine errors keep their stable code.
#[derive(Debug)]
struct Failure(ErrorBody);

impl From<gramforge::Error> for Failure {
    fn from(e: gramforge::Error) -> Self {
        Failure(ErrorBody::from(&e))
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure(e.body)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        gramforge::Error::from(e).into()
    }
}

struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Output<'_> {
    /// JSON mode prints `value`; text mode prints `text`.
    fn emit<T: Serialize>(
        &mut self,
        value: &T,
        text: impl FnOnce() -> String,
    ) -> Result<(), Failure> {
        if self.json {
            self.out.write_all(to_json_line(value).as_bytes())?;
        } else {
            let mut text = text();
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            self.out.write_all(text.as_bytes())?;
        }
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs one subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let json = cli.json;
    let mut output = Output { json, out: stdout };
    match execute(cli, &mut output) {
        Ok(()) => EXIT_OK,
        Err(Failure(body)) => {
            let _ = if json {
                stderr.write_all(to_json_line(&body).as_bytes())
            } else {
                writeln!(stderr, "error: {}", body.message)
            };
            EXIT_RUNTIME
        }
    }
}

fn model_path(workspace: &Path, model: Option<PathBuf>) -> PathBuf {
    model.unwrap_or_else(|| workspace.join(DEFAULT_MODEL))
}

fn load_store(workspace: &Path) -> Result<CorpusStore, Failure> {
    Ok(CorpusStore::load(workspace.join(CORPUS_DIR))?)
}

fn save_store(workspace: &Path, store: &CorpusStore) -> Result<(), Failure> {
    let dir = workspace.join(CORPUS_DIR);
    fs::create_dir_all(&dir).map_err(|e| gramforge::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(store.save(dir)?)
}

fn listing(store: &CorpusStore) -> CorpusListing {
    CorpusListing {
        documents: store.documents().iter().map(|d| d.info()).collect(),
        stats: store.stats(),
    }
}

fn describe_listing(listing: &CorpusListing) -> String {
    let mut text = String::new();
    for doc in &listing.documents {
        text.push_str(&format!(
            "{}\t{}\t{} tokens\t{} bytes\n",
            doc.id.0, doc.name, doc.token_count, doc.byte_size
        ));
    }
    text.push_str(&format!(
        "{} document(s), {} tokens, {} distinct words",
        listing.stats.document_count, listing.stats.total_tokens, listing.stats.vocabulary_size
    ));
    text
}

fn describe_stats(stats: &ModelStats, path: &Path) -> String {
    format!(
        "n={} contexts={} ngrams={} (distinct {}) vocabulary={} built in {:.1} ms -> {}",
        stats.n,
        stats.distinct_contexts,
        stats.total_ngrams,
        stats.distinct_ngrams,
        stats.vocabulary_size,
        stats.build_millis,
        path.display()
    )
}

/// Feeds every file into the model as its own document.
fn feed_files(
    model: &mut NGramModel,
    files: &[PathBuf],
    config: &TokenizerConfig,
) -> Result<(), Failure> {
    for path in files {
        let file = File::open(path).map_err(|e| gramforge::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut feeder = model.feeder();
        tokenizer::for_each_token_in_reader(BufReader::with_capacity(1 << 20, file), config, |t| {
            feeder.push(t)
        })
        .map_err(|source| gramforge::Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

fn read_text(files: &[PathBuf]) -> Result<String, Failure> {
    let mut text = String::new();
    for path in files {
        let bytes = fs::read(path).map_err(|e| gramforge::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        text.push_str(&String::from_utf8_lossy(&bytes));
        text.push('\n');
    }
    Ok(text)
}

fn load_predictor(path: &Path, mode: TokenizerMode) -> Result<Predictor, Failure> {
    let model = NGramModel::load_from_path(path)?;
    Ok(Predictor::new(Arc::new(model), config_for(mode)))
}

#[derive(Serialize)]
struct Ingested {
    added: Vec<DocumentInfo>,
    stats: gramforge::corpus::CorpusStats,
}

#[derive(Serialize)]
struct Built {
    path: PathBuf,
    bytes: u64,
    stats: ModelStats,
}

fn execute(cli: Cli, out: &mut Output<'_>) -> Result<(), Failure> {
    let workspace = cli.workspace;
    match cli.command {
        Command::Ingest { corpus, mode } => {
            let mut store = load_store(&workspace)?;
            if let Some(mode) = mode {
                if mode != store.config().mode {
                    store.set_config(config_for(mode))?;
                }
            }
            let mut added = Vec::new();
            for path in &corpus {
                added.push(store.add_file(path)?.info());
            }
            save_store(&workspace, &store)?;
            let report = Ingested {
                added,
                stats: store.stats(),
            };
            out.emit(&report, || {
                let mut text: String = report
                    .added
                    .iter()
                    .map(|d| format!("added {}\t{}\t{} tokens\n", d.id.0, d.name, d.token_count))
                    .collect();
                text.push_str(&format!(
                    "{} document(s), {} tokens",
                    report.stats.document_count, report.stats.total_tokens
                ));
                text
            })
        }
        Command::CorpusList => {
            let listing = listing(&load_store(&workspace)?);
            out.emit(&listing, || describe_listing(&listing))
        }
        Command::CorpusClear => {
            let mut store = load_store(&workspace)?;
            store.clear();
            save_store(&workspace, &store)?;
            let listing = listing(&store);
            out.emit(&listing, || "corpus cleared".into())
        }
        Command::Build {
            n,
            corpus,
            out: path,
            mode,
        } => {
            let model = if corpus.is_empty() {
                let store = load_store(&workspace)?;
                if store.is_empty() {
                    return Err(gramforge::Error::ModelEmpty.into());
                }
                NGramModel::from_corpus(&store, n)?
            } else {
                let mut model = NGramModel::new(n)?;
                let start = std::time::Instant::now();
                feed_files(&mut model, &corpus, &config_for(mode))?;
                model.set_build_millis(start.elapsed().as_secs_f64() * 1e3);
                model
            };
            let path = model_path(&workspace, path);
            write_model(out, &model, path)
        }
        Command::Update {
            corpus,
            model,
            out: target,
            mode,
        } => {
            let source = model_path(&workspace, model);
            let mut model = NGramModel::load_from_path(&source)?;
            feed_files(&mut model, &corpus, &config_for(mode))?;
            write_model(out, &model, target.unwrap_or(source))
        }
        Command::Prune {
            threshold,
            model,
            out: target,
        } => {
            let source = model_path(&workspace, model);
            let mut model = NGramModel::load_from_path(&source)?;
            let removed = model.prune(threshold)?;
            let target = target.unwrap_or(source);
            model.save_to_path(&target)?;
            let response = PruneResponse {
                removed,
                stats: model.stats(),
            };
            out.emit(&response, || {
                format!(
                    "removed {removed} context(s); {}",
                    describe_stats(&response.stats, &target)
                )
            })
        }
        Command::Predict(args) => query(out, &workspace, args, false),
        Command::Complete(args) => query(out, &workspace, args, true),
        Command::Perplexity {
            prompt,
            corpus,
            model,
            smoothing,
            mode,
        } => {
            let text = match (prompt, corpus.is_empty()) {
                (Some(prompt), true) => prompt,
                (None, false) => read_text(&corpus)?,
                _ => {
                    return Err(
                        ApiError::bad_request("give exactly one of --prompt or --corpus").into(),
                    );
                }
            };
            let predictor = load_predictor(&model_path(&workspace, model), mode)?;
            let query = PerplexityQuery {
                text,
                smoothing: smoothing.smoothing,
                k: smoothing.k,
            };
            let response = perplexity_with(&predictor, SmoothingMethod::default(), &query, false)?;
            out.emit(&response, || {
                let r = &response.report;
                let pp = if r.is_infinite() {
                    format!(
                        "infinite ({} zero-probability position(s))",
                        r.zero_probability_positions
                    )
                } else {
                    format!("{:.6}", r.perplexity)
                };
                format!(
                    "perplexity {pp} over {} token(s) [{}]",
                    r.scored_tokens, r.method
                )
            })
        }
        Command::Bench {
            corpus,
            n,
            repetitions,
            throughput,
            bytes,
            out: target,
            mode,
        } => {
            let config = config_for(mode);
            if throughput {
                let report = match corpus.as_slice() {
                    [] => {
                        eval::throughput_of_text(&SyntheticCorpus::new(0).generate(bytes), &config)?
                    }
                    [path] => eval::bench_throughput(path, &config)?,
                    _ => {
                        return Err(
                            ApiError::bad_request("throughput takes at most one --corpus").into(),
                        )
                    }
                };
                return out.emit(&report, || {
                    format!(
                        "{:.0} tokens/s (median of {} runs, {} tokens, {} bytes)",
                        report.tokens_per_second,
                        report.runs.len(),
                        report.tokens,
                        report.bytes
                    )
                });
            }
            if corpus.is_empty() {
                return Err(ApiError::bad_request("bench needs at least one --corpus file").into());
            }
            let orders: Vec<usize> = if n.is_empty() {
                vec![1, 2, 3, 4]
            } else {
                n.iter().map(|&n| n as usize).collect()
            };
            let results = eval::bench_build(&corpus, &orders, repetitions as usize, &config)?;
            let records: Vec<_> = results.iter().map(|r| r.record.clone()).collect();
            let mut csv = Vec::new();
            eval::write_csv(&records, &mut csv)?;
            if let Some(target) = &target {
                fs::write(target, &csv).map_err(|e| gramforge::Error::Io {
                    path: target.clone(),
                    source: e,
                })?;
            }
            out.emit::<Vec<BenchmarkResult>>(&results, || {
                String::from_utf8(csv).expect("csv is utf-8")
            })
        }
        Command::Serve { port } => {
            let store = load_store(&workspace)?;
            let config = ServiceConfig {
                tokenizer: *store.config(),
                ..ServiceConfig::default()
            };
            let session = Session::with_corpus(config, store);
            let _ = tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .try_init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(gramforge_service::serve(port, session))?;
            Ok(())
        }
    }
}

fn write_model(out: &mut Output<'_>, model: &NGramModel, path: PathBuf) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| gramforge::Error::Io {
            path: parent.to_owned(),
            source: e,
        })?;
    }
    let bytes = model.save_to_path(&path)?;
    let built = Built {
        bytes,
        stats: model.stats(),
        path,
    };
    out.emit(&built, || describe_stats(&built.stats, &built.path))
}

fn query(
    out: &mut Output<'_>,
    workspace: &Path,
    args: QueryArgs,
    complete: bool,
) -> Result<(), Failure> {
    let predictor = load_predictor(&model_path(workspace, args.model), args.mode)?;
    let query = PredictQuery {
        prompt: args.prompt,
        count: args.count as usize,
        top: args.top as usize,
        backoff: !args.no_backoff,
        smoothing: args.smoothing.smoothing,
        k: args.smoothing.k,
    };
    let response = predict_with(&predictor, SmoothingMethod::default(), &query, false)?;
    out.emit(&response, || {
        let generated = response.tokens.iter().map(|t| t.as_str());
        if complete {
            response
                .prompt_tokens
                .iter()
                .map(|t| t.as_str())
                .chain(generated)
                .collect::<Vec<_>>()
                .join(" ")
        } else if query.top > 1 {
            response
                .steps
                .iter()
                .map(|step| {
                    step.candidates
                        .iter()
                        .map(|c| format!("{} {:.6}", c.word, c.probability))
                        .collect::<Vec<_>>()
                        .join("\t")
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            generated.collect::<Vec<_>>().join(" ")
        }
    })
}
