use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use gramforge::corpus::{CorpusStore, DocumentId, DocumentInfo};
use gramforge::eval::{self, synthetic::SyntheticCorpus, ThroughputReport};
use gramforge::model::{ModelStats, NGramModel};
use gramforge::predict::{GenerationRequest, Predictor, DEFAULT_MAX_GENERATION};
use gramforge::report::{
    CorpusListing, ErrorBody, PerplexityResponse, PredictResponse, PruneResponse,
};
use gramforge::smoothing::SmoothingMethod;
use gramforge::tokenizer::TokenizerConfig;
use gramforge::Error;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest accepted request body.
    pub max_upload_bytes: usize,
    /// Corpora with more tokens than this are built in the background and
    /// POST /model answers 202.
    pub async_build_tokens: u64,
    pub max_generation: usize,
    pub throughput_bytes: u64,
    pub tokenizer: TokenizerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_upload_bytes: 2 << 30,
            async_build_tokens: 2_000_000,
            max_generation: DEFAULT_MAX_GENERATION,
            throughput_bytes: eval::MIN_THROUGHPUT_BYTES,
            tokenizer: TokenizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub smoothing: SmoothingMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum BuildStatus {
    Idle,
    Building { job: u64, n: usize, tokens: u64 },
    Ready { job: u64 },
    Failed { job: u64, error: ErrorBody },
}

/// Snapshot returned by GET /model and POST /model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelView {
    pub built: bool,
    pub stale: bool,
    pub params: Option<ModelParams>,
    pub stats: Option<ModelStats>,
    pub corpus_generation: u64,
    pub model_generation: Option<u64>,
    pub build: BuildStatus,
}

#[derive(Debug)]
struct ModelSlot {
    predictor: Arc<Predictor>,
    params: ModelParams,
    generation: u64,
    stats: ModelStats,
}

#[derive(Debug)]
struct BuildState {
    status: BuildStatus,
    next_job: u64,
}

/// Whether a build finished inline or was handed to a background job.
pub enum BuildStart {
    Done(ModelView),
    Started {
        job: u64,
        work: Box<dyn FnOnce() + Send>,
    },
}

/// Query parameters shared by GET /predict and the CLI.
#[derive(Debug, Clone, Deserialize)]
pub struct PredictQuery {
    pub prompt: String,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "one")]
    pub top: usize,
    #[serde(default = "yes")]
    pub backoff: bool,
    pub smoothing: Option<String>,
    pub k: Option<f64>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
pub struct PerplexityQuery {
    pub text: String,
    pub smoothing: Option<String>,
    pub k: Option<f64>,
}

/// The single in-memory session behind the service. Corpus and model are
/// swapped as whole snapshots so readers never block on a build.
#[derive(Debug)]
pub struct Session {
    config: ServiceConfig,
    corpus: RwLock<Arc<CorpusStore>>,
    model: RwLock<Option<Arc<ModelSlot>>>,
    build: Mutex<BuildState>,
}

fn resolve_method(
    name: Option<&str>,
    k: Option<f64>,
    fallback: SmoothingMethod,
) -> Result<SmoothingMethod, ApiError> {
    match name {
        Some(name) => Ok(SmoothingMethod::from_name(name, k)?),
        None => match (fallback, k) {
            (SmoothingMethod::AddK { .. }, Some(k)) => {
                let method = SmoothingMethod::AddK { k };
                method.validate()?;
                Ok(method)
            }
            _ => Ok(fallback),
        },
    }
}

impl Session {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Self::with_corpus(config.clone(), CorpusStore::new(config.tokenizer))
    }

    pub fn with_corpus(config: ServiceConfig, corpus: CorpusStore) -> Arc<Self> {
        Arc::new(Self {
            config,
            corpus: RwLock::new(Arc::new(corpus)),
            model: RwLock::new(None),
            build: Mutex::new(BuildState {
                status: BuildStatus::Idle,
                next_job: 1,
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn corpus_snapshot(&self) -> Arc<CorpusStore> {
        self.corpus.read().expect("corpus lock").clone()
    }

    fn mutate_corpus<T>(
        &self,
        f: impl FnOnce(&mut CorpusStore) -> gramforge::Result<T>,
    ) -> Result<T, ApiError> {
        let mut guard = self.corpus.write().expect("corpus lock");
        Ok(f(Arc::make_mut(&mut guard))?)
    }

    fn model_slot(&self) -> Result<Arc<ModelSlot>, ApiError> {
        self.model
            .read()
            .expect("model lock")
            .clone()
            .ok_or_else(ApiError::model_not_built)
    }

    pub fn add_document(&self, name: &str, bytes: &[u8]) -> Result<DocumentInfo, ApiError> {
        self.mutate_corpus(|c| c.add_bytes(name, bytes).map(|d| d.info()))
    }

    pub fn remove_document(&self, id: u64) -> Result<DocumentInfo, ApiError> {
        self.mutate_corpus(|c| c.remove_document(DocumentId(id)).map(|d| d.info()))
    }

    pub fn clear_corpus(&self) -> CorpusListing {
        self.mutate_corpus(|c| {
            c.clear();
            Ok(())
        })
        .expect("clearing cannot fail");
        self.listing()
    }

    pub fn listing(&self) -> CorpusListing {
        let corpus = self.corpus_snapshot();
        CorpusListing {
            documents: corpus.documents().iter().map(|d| d.info()).collect(),
            stats: corpus.stats(),
        }
    }

    pub fn model_view(&self) -> ModelView {
        let slot = self.model.read().expect("model lock").clone();
        let corpus_generation = self.corpus_snapshot().generation();
        ModelView {
            built: slot.is_some(),
            stale: slot
                .as_ref()
                .is_some_and(|s| s.generation != corpus_generation),
            params: slot.as_ref().map(|s| s.params),
            stats: slot.as_ref().map(|s| s.stats.clone()),
            corpus_generation,
            model_generation: slot.as_ref().map(|s| s.generation),
            build: self.build.lock().expect("build lock").status.clone(),
        }
    }

    /// Validates the request and either builds now or returns the work to
    /// run off the request path.
    pub fn start_build(
        self: &Arc<Self>,
        n: usize,
        smoothing: Option<&str>,
        k: Option<f64>,
    ) -> Result<BuildStart, ApiError> {
        NGramModel::new(n)?;
        let params = ModelParams {
            n,
            smoothing: resolve_method(smoothing, k, SmoothingMethod::default())?,
        };
        let corpus = self.corpus_snapshot();
        let tokens = corpus.stats().total_tokens;
        if tokens == 0 {
            return Err(Error::ModelEmpty.into());
        }
        let job = {
            let mut build = self.build.lock().expect("build lock");
            if let BuildStatus::Building { job, .. } = build.status {
                return Err(ApiError::build_in_progress(job));
            }
            let job = build.next_job;
            build.next_job += 1;
            build.status = BuildStatus::Building { job, n, tokens };
            job
        };
        let session = Arc::clone(self);
        let work = move || session.run_build(job, params, &corpus);
        if tokens > self.config.async_build_tokens {
            tracing::info!(job, n, tokens, "building model in the background");
            Ok(BuildStart::Started {
                job,
                work: Box::new(work),
            })
        } else {
            work();
            Ok(BuildStart::Done(self.model_view()))
        }
    }

    fn run_build(&self, job: u64, params: ModelParams, corpus: &CorpusStore) {
        let start = Instant::now();
        let result = NGramModel::from_corpus(corpus, params.n);
        let mut build = self.build.lock().expect("build lock");
        match result {
            Ok(model) => {
                let slot = ModelSlot {
                    stats: model.stats(),
                    predictor: Arc::new(
                        Predictor::new(Arc::new(model), *corpus.config())
                            .with_max_tokens(self.config.max_generation),
                    ),
                    params,
                    generation: corpus.generation(),
                };
                *self.model.write().expect("model lock") = Some(Arc::new(slot));
                build.status = BuildStatus::Ready { job };
                tracing::info!(
                    job,
                    n = params.n,
                    ms = start.elapsed().as_millis() as u64,
                    "model built"
                );
            }
            Err(e) => {
                build.status = BuildStatus::Failed {
                    job,
                    error: ErrorBody::from(&e),
                };
            }
        }
    }

    pub fn prune(&self, threshold: i64) -> Result<PruneResponse, ApiError> {
        let mut guard = self.model.write().expect("model lock");
        let slot = guard.as_ref().ok_or_else(ApiError::model_not_built)?;
        let mut model = NGramModel::clone(slot.predictor.model());
        let removed = model.prune(threshold)?;
        let stats = model.stats();
        let predictor = Predictor::new(Arc::new(model), *slot.predictor.config())
            .with_max_tokens(self.config.max_generation);
        *guard = Some(Arc::new(ModelSlot {
            predictor: Arc::new(predictor),
            params: slot.params,
            generation: slot.generation,
            stats: stats.clone(),
        }));
        Ok(PruneResponse { removed, stats })
    }

    pub fn predict(&self, query: &PredictQuery) -> Result<PredictResponse, ApiError> {
        let slot = self.model_slot()?;
        let stale = slot.generation != self.corpus_snapshot().generation();
        predict_with(&slot.predictor, slot.params.smoothing, query, stale)
    }

    pub fn perplexity(&self, query: &PerplexityQuery) -> Result<PerplexityResponse, ApiError> {
        let slot = self.model_slot()?;
        let stale = slot.generation != self.corpus_snapshot().generation();
        perplexity_with(&slot.predictor, slot.params.smoothing, query, stale)
    }

    pub fn throughput(&self, bytes: Option<u64>) -> Result<ThroughputReport, ApiError> {
        let bytes = bytes.unwrap_or(self.config.throughput_bytes);
        if bytes > self.config.max_upload_bytes as u64 {
            return Err(ApiError::bad_request(format!(
                "bytes must not exceed {}",
                self.config.max_upload_bytes
            )));
        }
        let text = SyntheticCorpus::new(0).generate(bytes);
        Ok(eval::throughput_of_text(&text, &self.config.tokenizer)?)
    }
}

/// Runs a prediction query against a predictor; shared with the CLI so both
/// produce the same response for the same model.
pub fn predict_with(
    predictor: &Predictor,
    default_method: SmoothingMethod,
    query: &PredictQuery,
    stale: bool,
) -> Result<PredictResponse, ApiError> {
    let method = resolve_method(query.smoothing.as_deref(), query.k, default_method)?;
    let request = GenerationRequest {
        prompt: query.prompt.clone(),
        token_count: query.count,
        method,
        backoff_enabled: query.backoff,
        top_m: query.top,
    };
    let generation = predictor.generate(&request)?;
    Ok(PredictResponse::new(
        generation,
        method,
        query.backoff,
        predictor.model().order(),
        stale,
    ))
}

pub fn perplexity_with(
    predictor: &Predictor,
    default_method: SmoothingMethod,
    query: &PerplexityQuery,
    stale: bool,
) -> Result<PerplexityResponse, ApiError> {
    let method = resolve_method(query.smoothing.as_deref(), query.k, default_method)?;
    let tokens = predictor.tokenize(&query.text);
    let report = eval::perplexity(predictor.model(), &tokens, method)?;
    Ok(PerplexityResponse {
        report,
        n: predictor.model().order(),
        stale,
    })
}
