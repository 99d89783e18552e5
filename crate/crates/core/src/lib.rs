//! A lightweight n-gram language modeling engine.
//!
//! Text is normalized and split by [`tokenizer`], collected into a
//! [`corpus::CorpusStore`], counted into an [`model::NGramModel`], turned into
//! probabilities by [`smoothing`], queried through [`predict::Predictor`] and
//! scored by [`eval::perplexity`].
//!
//! ```
//! use std::sync::Arc;
//! use gramforge::prelude::*;
//!
//! let cfg = TokenizerConfig::default();
//! let doc = tokenize("The cat is sleeping", &cfg);
//! let model = NGramModel::build(&[doc], 3).unwrap();
//! let predictor = Predictor::new(Arc::new(model), cfg);
//! let out = predictor.generate(&GenerationRequest::new("the cat", 2)).unwrap();
//! assert_eq!(out.tokens, ["is", "sleeping"]);
//! ```

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod predict;
pub mod report;
pub mod smoothing;
pub mod tokenizer;
pub mod vocab;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::corpus::{CorpusStats, CorpusStore, Document, DocumentId};
    pub use crate::error::{Error, Result};
    pub use crate::eval::{perplexity, PerplexityReport};
    pub use crate::model::{ContextKey, ModelStats, NGramModel, MAX_ORDER};
    pub use crate::predict::{GenerationRequest, Prediction, Predictor};
    pub use crate::smoothing::{distribution, probability, SmoothingMethod};
    pub use crate::tokenizer::{tokenize, Token, TokenizerConfig, TokenizerMode};
}
