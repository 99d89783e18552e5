//! Perplexity evaluation and timing benchmarks.

mod bench;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NGramModel;
use crate::smoothing::{Estimator, SmoothingMethod};

pub use bench::{
    bench_build, bench_throughput, median, read_csv, throughput_of_text, write_csv,
    BenchmarkRecord, BenchmarkResult, ThroughputReport, CSV_HEADER, MIN_THROUGHPUT_BYTES,
    THROUGHPUT_RUNS,
};

fn serialize_perplexity<S: serde::Serializer>(
    value: &f64,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    if value.is_finite() {
        s.serialize_f64(*value)
    } else {
        s.serialize_none()
    }
}

fn deserialize_perplexity<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub test_token_count: usize,
    /// Leading tokens without a full (n-1)-token history.
    pub skipped_prefix: usize,
    pub scored_tokens: usize,
    /// Sum of log2 probabilities over scored positions with non-zero
    /// probability.
    pub log2_prob_sum: f64,
    /// `null` in JSON when infinite.
    #[serde(
        serialize_with = "serialize_perplexity",
        deserialize_with = "deserialize_perplexity"
    )]
    pub perplexity: f64,
    /// Scored positions that received probability 0 (MLE only).
    pub zero_probability_positions: usize,
    pub method: SmoothingMethod,
}

impl PerplexityReport {
    pub fn is_infinite(&self) -> bool {
        self.perplexity.is_infinite()
    }
}

/// `PP = 2^(-(1/N) * sum log2 P(w_i | previous n-1 tokens))` over every
/// position that has a full history. Any zero probability makes the
/// perplexity infinite.
pub fn perplexity<S: AsRef<str>>(
    model: &NGramModel,
    test_tokens: &[S],
    method: SmoothingMethod,
) -> Result<PerplexityReport> {
    method.validate()?;
    let n = model.order();
    let skipped_prefix = (n - 1).min(test_tokens.len());
    let scored_tokens = test_tokens.len() - skipped_prefix;
    if scored_tokens == 0 {
        return Err(Error::NoScoreableTokens {
            tokens: test_tokens.len(),
            n,
        });
    }
    let mut log2_prob_sum = 0.0;
    let mut zero_probability_positions = 0;
    for i in n - 1..test_tokens.len() {
        let context = model.context_ids(&test_tokens[i + 1 - n..i]);
        let estimator = Estimator::new(model, context.as_deref(), method)?;
        let p = estimator.estimate(test_tokens[i].as_ref()).value;
        if p > 0.0 {
            log2_prob_sum += p.log2();
        } else {
            zero_probability_positions += 1;
        }
    }
    let perplexity = if zero_probability_positions > 0 {
        f64::INFINITY
    } else {
        (-log2_prob_sum / scored_tokens as f64).exp2()
    };
    Ok(PerplexityReport {
        test_token_count: test_tokens.len(),
        skipped_prefix,
        scored_tokens,
        log2_prob_sum,
        perplexity,
        zero_probability_positions,
        method,
    })
}
