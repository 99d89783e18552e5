//! Probability estimators over the count table.
//!
//! * MLE: `c / C`.
//! * Laplace: `(c + 1) / (C + V)`.
//! * Add-k: `(c + k) / (C + kV)` with `0 < k <= 1`.
//! * Good-Turing: the unseen mass `P0 = N1 / N` (model-wide singletons over
//!   total n-grams) is shared equally by the `U` vocabulary words not seen
//!   after the context; seen words keep their MLE share scaled by `1 - P0`.
//!   Unseen contexts get the uniform `1 / V`. When `P0` is 0 or 1 the
//!   estimate degenerates and Laplace is used instead.
//!
//! A query word outside the vocabulary counts as one extra unseen type for
//! that query only; the model is never mutated by reads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextKey, NGramModel, Successors};
use crate::tokenizer::Token;
use crate::vocab::WordId;

/// k used for add-k when none is given.
pub const DEFAULT_ADD_K: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SmoothingMethod {
    Mle,
    #[default]
    Laplace,
    #[serde(rename = "addk")]
    AddK {
        k: f64,
    },
    GoodTuring,
}

impl SmoothingMethod {
    /// Resolves a CLI/API method name. `k` is only meaningful for `addk`.
    pub fn from_name(name: &str, k: Option<f64>) -> Result<Self> {
        let method = match name {
            "mle" => SmoothingMethod::Mle,
            "laplace" => SmoothingMethod::Laplace,
            "addk" | "add-k" => SmoothingMethod::AddK {
                k: k.unwrap_or(DEFAULT_ADD_K),
            },
            "good-turing" | "goodturing" | "gt" => SmoothingMethod::GoodTuring,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown smoothing {other:?} (expected mle, laplace, addk or good-turing)"
                )))
            }
        };
        method.validate()?;
        Ok(method)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SmoothingMethod::Mle => "mle",
            SmoothingMethod::Laplace => "laplace",
            SmoothingMethod::AddK { .. } => "addk",
            SmoothingMethod::GoodTuring => "good-turing",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SmoothingMethod::AddK { k } if !(k > 0.0 && k <= 1.0) => Err(Error::InvalidArgument(
                format!("add-k constant must lie in (0, 1], got {k}"),
            )),
            _ => Ok(()),
        }
    }

    /// Whether every vocabulary word is guaranteed a non-zero probability.
    pub fn is_smoothed(&self) -> bool {
        !matches!(self, SmoothingMethod::Mle)
    }
}

impl fmt::Display for SmoothingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingMethod::AddK { k } => write!(f, "addk(k={k})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for SmoothingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SmoothingMethod::from_name(s, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub method: SmoothingMethod,
    /// Whether the (context, word) pair was observed.
    pub seen: bool,
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Mle,
    Additive { k: f64 },
    GoodTuring { unseen_mass: f64 },
}

/// Conditional distribution for one context, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct Estimator<'m> {
    model: &'m NGramModel,
    successors: Option<&'m Successors>,
    method: SmoothingMethod,
    rule: Rule,
}

impl<'m> Estimator<'m> {
    /// `context` holds ids in the model's vocabulary; `None` means the
    /// context contains an out-of-vocabulary word and is therefore unseen.
    pub fn new(
        model: &'m NGramModel,
        context: Option<&[WordId]>,
        method: SmoothingMethod,
    ) -> Result<Self> {
        method.validate()?;
        if model.vocabulary_size() == 0 {
            return Err(Error::ModelEmpty);
        }
        if let Some(ctx) = context {
            if ctx.len() + 1 != model.order() {
                return Err(Error::InvalidArgument(format!(
                    "context has {} tokens, order-{} model needs {}",
                    ctx.len(),
                    model.order(),
                    model.order() - 1
                )));
            }
        }
        let rule = match method {
            SmoothingMethod::Mle => Rule::Mle,
            SmoothingMethod::Laplace => Rule::Additive { k: 1.0 },
            SmoothingMethod::AddK { k } => Rule::Additive { k },
            SmoothingMethod::GoodTuring => {
                let total = model.total_ngrams();
                let singletons = model.singletons();
                if total == 0 || singletons == 0 || singletons == total {
                    tracing::debug!(
                        singletons,
                        total,
                        "good-turing unseen mass degenerate, using laplace"
                    );
                    Rule::Additive { k: 1.0 }
                } else {
                    Rule::GoodTuring {
                        unseen_mass: singletons as f64 / total as f64,
                    }
                }
            }
        };
        Ok(Self {
            model,
            successors: context.and_then(|c| model.successors(c)),
            method,
            rule,
        })
    }

    /// Resolves a rendered context against the model.
    pub fn for_key(
        model: &'m NGramModel,
        key: &ContextKey,
        method: SmoothingMethod,
    ) -> Result<Self> {
        if key.len() + 1 != model.order() {
            return Err(Error::InvalidArgument(format!(
                "context {:?} has {} tokens, order-{} model needs {}",
                key.render(),
                key.len(),
                model.order(),
                model.order() - 1
            )));
        }
        let ids = model.context_ids(key.tokens());
        Self::new(model, ids.as_deref(), method)
    }

    pub fn method(&self) -> SmoothingMethod {
        self.method
    }

    /// Summed count under this context (0 when unseen).
    pub fn context_total(&self) -> u64 {
        self.successors.map_or(0, Successors::total)
    }

    pub fn is_seen_context(&self) -> bool {
        self.context_total() > 0
    }

    pub fn count(&self, word: WordId) -> u64 {
        self.successors.map_or(0, |s| s.get(word))
    }

    /// Probability of a vocabulary word.
    #[inline]
    pub fn prob(&self, word: WordId) -> f64 {
        self.prob_with_count(self.count(word), false)
    }

    /// Probability of `word`, which may be out of vocabulary.
    pub fn estimate(&self, word: &str) -> ProbabilityEstimate {
        let (count, oov) = match self.model.vocab().id(word) {
            Some(id) => (self.count(id), false),
            None => (0, true),
        };
        ProbabilityEstimate {
            value: self.prob_with_count(count, oov),
            method: self.method,
            seen: count > 0,
        }
    }

    fn prob_with_count(&self, count: u64, oov: bool) -> f64 {
        let v = self.model.vocabulary_size() as f64;
        let total = self.context_total();
        let c = count as f64;
        match self.rule {
            Rule::Mle => {
                if total == 0 {
                    0.0
                } else {
                    c / total as f64
                }
            }
            Rule::Additive { k } => (c + k) / (total as f64 + k * v),
            Rule::GoodTuring { unseen_mass } => {
                let Some(successors) = self.successors.filter(|s| s.total() > 0) else {
                    return 1.0 / v;
                };
                let unseen_types = self.model.vocabulary_size() - successors.len();
                if count > 0 {
                    let scale = if unseen_types == 0 {
                        1.0
                    } else {
                        1.0 - unseen_mass
                    };
                    scale * c / total as f64
                } else {
                    let types = unseen_types + usize::from(oov);
                    unseen_mass / types as f64
                }
            }
        }
    }

    /// Probabilities indexed by word id, covering the whole vocabulary.
    pub fn distribution_ids(&self) -> Vec<f64> {
        let v = self.model.vocabulary_size();
        let base = self.prob_with_count(0, false);
        let mut probs = vec![base; v];
        if let Some(successors) = self.successors {
            for (word, count) in successors.iter() {
                probs[word as usize] = self.prob_with_count(count, false);
            }
        }
        probs
    }
}

/// `P(word | context)` under `method`.
pub fn probability(
    model: &NGramModel,
    context: &ContextKey,
    word: &str,
    method: SmoothingMethod,
) -> Result<ProbabilityEstimate> {
    Ok(Estimator::for_key(model, context, method)?.estimate(word))
}

/// The full conditional distribution over the vocabulary.
pub fn distribution(
    model: &NGramModel,
    context: &ContextKey,
    method: SmoothingMethod,
) -> Result<BTreeMap<Token, f64>> {
    let estimator = Estimator::for_key(model, context, method)?;
    let vocab = model.vocab();
    Ok(estimator
        .distribution_ids()
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            (
                Token::new(vocab.word(id as WordId)).expect("vocabulary token"),
                p,
            )
        })
        .collect())
}
