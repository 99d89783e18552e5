use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything the engine can refuse to do.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid n-gram order {n}: must be between 1 and {max}")]
    InvalidOrder { n: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("document {name:?} contains no tokens after normalization")]
    EmptyDocument { name: String },

    #[error("no document with id {0}")]
    DocumentNotFound(u64),

    #[error("tokenizer config cannot change while the store holds {documents} document(s); clear and re-ingest")]
    ConfigLocked { documents: usize },

    #[error("model has an empty vocabulary")]
    ModelEmpty,

    #[error("prompt supplies {have} context token(s) but the model needs {need} and backoff is disabled")]
    InsufficientContext { have: usize, need: usize },

    #[error("test sequence has no scoreable tokens ({tokens} token(s), order {n})")]
    NoScoreableTokens { tokens: usize, n: usize },

    #[error("measurement unreliable: input is {bytes} bytes, need at least {min}")]
    MeasurementUnreliable { bytes: usize, min: usize },

    #[error("unsupported model format: {0}")]
    Version(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: file truncated: {message}")]
    Truncated { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error("corpus manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error("benchmark csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Stable machine-readable code, shared by the CLI `--json` output and the
    /// HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidOrder { .. } => "invalid_order",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyDocument { .. } => "empty_document",
            Error::DocumentNotFound(_) => "not_found",
            Error::ConfigLocked { .. } => "config_locked",
            Error::ModelEmpty => "model_empty",
            Error::InsufficientContext { .. } => "insufficient_context",
            Error::NoScoreableTokens { .. } => "no_scoreable_tokens",
            Error::MeasurementUnreliable { .. } => "measurement_unreliable",
            Error::Version(_) => "version_mismatch",
            Error::Parse { .. } => "malformed",
            Error::Truncated { .. } => "truncated",
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::Manifest(_) => "malformed_manifest",
            Error::Csv(_) => "malformed_csv",
        }
    }

    /// True for errors caused by caller input rather than the environment.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Stream(_))
    }
}
