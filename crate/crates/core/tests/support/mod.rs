//! Reference implementations and random inputs shared by the integration
//! tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use gramforge::model::NGramModel;
use rand::seq::SliceRandom;
use rand::Rng;

/// (context rendered with single spaces, next word) -> count.
pub type CountTable = BTreeMap<(String, String), u64>;

/// Sliding-window counter written as plainly as possible: every window of
/// `n` consecutive tokens inside one document is one observation.
pub fn brute_counts<S: AsRef<str>>(docs: &[Vec<S>], n: usize) -> CountTable {
    let mut table = CountTable::new();
    for doc in docs {
        if doc.len() < n {
            continue;
        }
        for start in 0..=doc.len() - n {
            let window: Vec<&str> = doc[start..start + n].iter().map(|t| t.as_ref()).collect();
            let context = window[..n - 1].join(" ");
            let word = window[n - 1].to_owned();
            *table.entry((context, word)).or_insert(0) += 1;
        }
    }
    table
}

pub fn model_counts(model: &NGramModel) -> CountTable {
    model
        .canonical_entries()
        .into_iter()
        .map(|(ctx, word, count)| ((ctx, word.to_owned()), count))
        .collect()
}

/// Per-context totals of a count table.
pub fn context_totals(table: &CountTable) -> BTreeMap<String, u64> {
    let mut totals = BTreeMap::new();
    for ((ctx, _), count) in table {
        *totals.entry(ctx.clone()).or_insert(0) += count;
    }
    totals
}

pub fn alphabet(size: usize) -> Vec<String> {
    (0..size)
        .map(|i| format!("w{}", (b'a' + i as u8) as char))
        .collect()
}

/// Between one and five documents over an alphabet of at most ten words,
/// at most `max_len` tokens in total.
pub fn random_docs<R: Rng>(rng: &mut R, max_len: usize) -> Vec<Vec<String>> {
    let words = alphabet(rng.gen_range(1..=10));
    let total = rng.gen_range(0..=max_len);
    let doc_count = rng.gen_range(1..=5);
    let mut docs = vec![Vec::new(); doc_count];
    for _ in 0..total {
        let doc = rng.gen_range(0..doc_count);
        docs[doc].push(words.choose(rng).unwrap().clone());
    }
    docs.retain(|d| !d.is_empty());
    docs
}

/// Like [`random_docs`] but guaranteed to produce at least one token.
pub fn random_nonempty_docs<R: Rng>(rng: &mut R, max_len: usize) -> Vec<Vec<String>> {
    loop {
        let docs = random_docs(rng, max_len);
        if !docs.is_empty() {
            return docs;
        }
    }
}

pub fn random_model<R: Rng>(
    rng: &mut R,
    max_len: usize,
    max_n: usize,
) -> (Vec<Vec<String>>, NGramModel) {
    let docs = random_nonempty_docs(rng, max_len);
    let n = rng.gen_range(1..=max_n);
    let model = NGramModel::build(&docs, n).unwrap();
    (docs, model)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
