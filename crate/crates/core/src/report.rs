//! JSON payloads shared by the CLI `--json` output and the HTTP service, so
//! both produce the same bytes for the same state.

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStats, DocumentInfo};
use crate::error::Error;
use crate::eval::PerplexityReport;
use crate::model::ModelStats;
use crate::predict::{Generation, GenerationStep};
use crate::smoothing::SmoothingMethod;
use crate::tokenizer::Token;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prompt_tokens: Vec<Token>,
    pub tokens: Vec<Token>,
    pub truncated: bool,
    pub steps: Vec<GenerationStep>,
    pub method: SmoothingMethod,
    pub backoff: bool,
    pub n: usize,
    pub stale: bool,
}

impl PredictResponse {
    pub fn new(
        generation: Generation,
        method: SmoothingMethod,
        backoff: bool,
        n: usize,
        stale: bool,
    ) -> Self {
        Self {
            prompt_tokens: generation.prompt_tokens,
            tokens: generation.tokens,
            truncated: generation.truncated,
            steps: generation.steps,
            method,
            backoff,
            n,
            stale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityResponse {
    #[serde(flatten)]
    pub report: PerplexityReport,
    pub n: usize,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusListing {
    pub documents: Vec<DocumentInfo>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResponse {
    pub removed: usize,
    pub stats: ModelStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            error: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

/// The one serializer both front ends use.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types always serialize")
}

/// [`to_json`] plus a trailing newline: the exact bytes of a CLI `--json`
/// line and of an HTTP response body.
pub fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut out = to_json(value);
    out.push('\n');
    out
}
