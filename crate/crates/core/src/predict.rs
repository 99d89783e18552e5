//! Next-word ranking, greedy generation and context-weighted backoff.
//!
//! When the full context is seen (or backoff is off) candidates are scored by
//! their smoothed probability. Otherwise successively shorter contexts are
//! tried; the first one with observations supplies the distribution and its
//! scores are damped by `ln(1 + T) / ln(2 + T)`, where `T` is that context's
//! total count, so a shorter match always ranks below an equally probable
//! full-length match.

use std::cmp::Ordering;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextKey, NGramModel};
use crate::smoothing::{Estimator, SmoothingMethod};
use crate::tokenizer::{self, Token, TokenizerConfig};
use crate::vocab::WordId;

/// Default ceiling on tokens generated per request.
pub const DEFAULT_MAX_GENERATION: usize = 100;

#[inline]
fn weight_of_total(total: u64) -> f64 {
    (total as f64).ln_1p()
}

/// `ln(1 + total)` for the context, 0 when unseen.
pub fn context_weight(model: &NGramModel, key: &ContextKey) -> f64 {
    if key.len() + 1 != model.order() {
        return 0.0;
    }
    model
        .context_ids(key.tokens())
        .map_or(0.0, |ctx| weight_of_total(model.context_total(&ctx)))
}

/// Multiplier applied to probabilities from a backed-off context.
pub fn backoff_damping(context_total: u64) -> f64 {
    weight_of_total(context_total) / weight_of_total(context_total + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub word: Token,
    pub score: f64,
    pub probability: f64,
    pub matched_order: usize,
}

/// Result of one next-word query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextWord {
    pub predictions: Vec<Prediction>,
    /// Order whose context supplied the distribution; `None` when no order
    /// had observations.
    pub matched_order: Option<usize>,
    /// Whether the supplying context had observations.
    pub context_seen: bool,
    /// Orders tried, longest first.
    pub attempted_orders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub token_count: usize,
    pub method: SmoothingMethod,
    pub backoff_enabled: bool,
    /// Candidates reported per step; the top one is always what gets emitted.
    pub top_m: usize,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, token_count: usize) -> Self {
        Self {
            prompt: prompt.into(),
            token_count,
            method: SmoothingMethod::default(),
            backoff_enabled: true,
            top_m: 1,
        }
    }

    pub fn validate(&self, max_tokens: usize) -> Result<()> {
        if self.token_count == 0 || self.token_count > max_tokens {
            return Err(Error::InvalidArgument(format!(
                "token count must be between 1 and {max_tokens}, got {}",
                self.token_count
            )));
        }
        if self.top_m == 0 {
            return Err(Error::InvalidArgument("top must be at least 1".into()));
        }
        self.method.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStep {
    pub token: Token,
    pub candidates: Vec<Prediction>,
    pub matched_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub prompt_tokens: Vec<Token>,
    pub tokens: Vec<Token>,
    pub steps: Vec<GenerationStep>,
    /// Set when generation stopped before `token_count` because no context
    /// matched.
    pub truncated: bool,
}

/// Query front end over one immutable model snapshot. Lower-order tables
/// for backoff are derived on first use and cached.
#[derive(Debug)]
pub struct Predictor {
    model: Arc<NGramModel>,
    config: TokenizerConfig,
    lower: Vec<OnceLock<NGramModel>>,
    max_tokens: usize,
}

impl Predictor {
    pub fn new(model: Arc<NGramModel>, config: TokenizerConfig) -> Self {
        let lower = (1..model.order()).map(|_| OnceLock::new()).collect();
        Self {
            model,
            config,
            lower,
            max_tokens: DEFAULT_MAX_GENERATION,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn model(&self) -> &Arc<NGramModel> {
        &self.model
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        tokenizer::tokenize(text, &self.config)
    }

    fn at_order(&self, order: usize) -> &NGramModel {
        if order == self.model.order() {
            &self.model
        } else {
            self.lower[order - 1]
                .get_or_init(|| self.model.marginalize(order).expect("order within 1..n"))
        }
    }

    /// Ranks candidates for the word following `prompt`.
    pub fn next_word<S: AsRef<str>>(
        &self,
        prompt: &[S],
        method: SmoothingMethod,
        top_m: usize,
        backoff_enabled: bool,
    ) -> Result<NextWord> {
        method.validate()?;
        if top_m == 0 {
            return Err(Error::InvalidArgument("top must be at least 1".into()));
        }
        if self.model.vocabulary_size() == 0 {
            return Err(Error::ModelEmpty);
        }
        let n = self.model.order();
        let need = n - 1;

        if !backoff_enabled {
            if prompt.len() < need {
                return Err(Error::InsufficientContext {
                    have: prompt.len(),
                    need,
                });
            }
            let ctx = self.model.context_ids(&prompt[prompt.len() - need..]);
            let estimator = Estimator::new(&self.model, ctx.as_deref(), method)?;
            let seen = estimator.is_seen_context();
            return Ok(NextWord {
                predictions: self.rank(&estimator, n, 1.0, top_m),
                matched_order: Some(n),
                context_seen: seen,
                attempted_orders: vec![n],
            });
        }

        let longest = n.min(prompt.len() + 1);
        let mut attempted = Vec::with_capacity(longest);
        for order in (1..=longest).rev() {
            attempted.push(order);
            let model = self.at_order(order);
            let ctx = model.context_ids(&prompt[prompt.len() - (order - 1)..]);
            let estimator = Estimator::new(model, ctx.as_deref(), method)?;
            let total = estimator.context_total();
            if total == 0 {
                continue;
            }
            let damping = if order == n {
                1.0
            } else {
                backoff_damping(total)
            };
            return Ok(NextWord {
                predictions: self.rank(&estimator, order, damping, top_m),
                matched_order: Some(order),
                context_seen: true,
                attempted_orders: attempted,
            });
        }
        Ok(NextWord {
            predictions: Vec::new(),
            matched_order: None,
            context_seen: false,
            attempted_orders: attempted,
        })
    }

    /// Tokenizes `prompt` with the model's config, then ranks.
    pub fn next_word_text(
        &self,
        prompt: &str,
        method: SmoothingMethod,
        top_m: usize,
        backoff_enabled: bool,
    ) -> Result<NextWord> {
        self.next_word(&self.tokenize(prompt), method, top_m, backoff_enabled)
    }

    fn rank(
        &self,
        estimator: &Estimator<'_>,
        order: usize,
        damping: f64,
        top_m: usize,
    ) -> Vec<Prediction> {
        let vocab = self.model.vocab();
        let mut scored: Vec<(f64, f64, WordId)> = estimator
            .distribution_ids()
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
            .map(|(id, p)| (p * damping, p, id as WordId))
            .collect();
        let by_rank = |a: &(f64, f64, WordId), b: &(f64, f64, WordId)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| vocab.word(a.2).cmp(vocab.word(b.2)))
        };
        if scored.len() > top_m {
            scored.select_nth_unstable_by(top_m - 1, by_rank);
            scored.truncate(top_m);
        }
        scored.sort_unstable_by(by_rank);
        scored
            .into_iter()
            .map(|(score, probability, id)| Prediction {
                word: Token::new(vocab.word(id)).expect("vocabulary token"),
                score,
                probability,
                matched_order: order,
            })
            .collect()
    }

    /// Greedy continuation: repeatedly appends the top-ranked next word.
    pub fn generate(&self, request: &GenerationRequest) -> Result<Generation> {
        request.validate(self.max_tokens)?;
        let prompt_tokens = self.tokenize(&request.prompt);
        let mut history = prompt_tokens.clone();
        let mut steps = Vec::with_capacity(request.token_count);
        let mut truncated = false;
        for _ in 0..request.token_count {
            let next = self.next_word(
                &history,
                request.method,
                request.top_m,
                request.backoff_enabled,
            )?;
            let (Some(order), Some(best)) = (next.matched_order, next.predictions.first()) else {
                truncated = true;
                break;
            };
            if !next.context_seen {
                truncated = true;
                break;
            }
            history.push(best.word.clone());
            steps.push(GenerationStep {
                token: best.word.clone(),
                candidates: next.predictions,
                matched_order: order,
            });
        }
        Ok(Generation {
            tokens: history.split_off(prompt_tokens.len()),
            prompt_tokens,
            steps,
            truncated,
        })
    }
}
