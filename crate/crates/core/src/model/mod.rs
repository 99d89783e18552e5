//! The n-gram count table.
//!
//! Each (n-1)-token context maps to the counts of the words observed right
//! after it. Windows never cross document boundaries and there is no sentence
//! padding, so a document of length `L` contributes `max(0, L - n + 1)`
//! n-grams. Unigram models use a single empty context.

mod format;
mod successors;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};
use crate::tokenizer::{self, Token, TokenizerConfig};
use crate::vocab::{Vocab, WordId};

pub use format::{FORMAT_MAGIC, FORMAT_VERSION};
pub use successors::Successors;

/// Highest supported order.
pub const MAX_ORDER: usize = 8;

/// Context stored as interned ids.
pub type Context = SmallVec<[WordId; 4]>;

/// An (n-1)-token context, rendered canonically as space-joined tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextKey(Vec<Token>);

impl ContextKey {
    pub fn new(tokens: Vec<Token>) -> Self {
        ContextKey(tokens)
    }

    /// Parses the canonical rendering. Whitespace runs separate tokens.
    pub fn parse(rendered: &str) -> Self {
        ContextKey(
            rendered
                .split_whitespace()
                .map(|t| Token::new(t).expect("split_whitespace yields non-empty tokens"))
                .collect(),
        )
    }

    /// Normalizes free text with `config` before splitting.
    pub fn from_text(text: &str, config: &TokenizerConfig) -> Self {
        ContextKey(tokenizer::tokenize(text, config))
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub n: usize,
    pub distinct_contexts: usize,
    pub distinct_ngrams: usize,
    pub total_ngrams: u64,
    pub vocabulary_size: usize,
    pub build_millis: f64,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    n: usize,
    vocab: Vocab,
    table: FxHashMap<Context, Successors>,
    total_ngrams: u64,
    count_of_counts: OnceLock<BTreeMap<u64, u64>>,
    build_millis: f64,
}

pub(crate) fn check_order(n: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidOrder { n, max: MAX_ORDER })
    }
}

impl NGramModel {
    /// An empty model of order `n`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_vocab(n, Vocab::new())
    }

    /// An empty model whose vocabulary is pre-seeded, so callers holding ids
    /// from `vocab` can feed [`update_ids`](Self::update_ids) directly.
    pub fn with_vocab(n: usize, vocab: Vocab) -> Result<Self> {
        check_order(n)?;
        Ok(Self {
            n,
            vocab,
            table: FxHashMap::default(),
            total_ngrams: 0,
            count_of_counts: OnceLock::new(),
            build_millis: 0.0,
        })
    }

    /// Counts every n-gram in every document; documents are independent.
    pub fn build<D, S>(docs: &[D], n: usize) -> Result<Self>
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        let start = Instant::now();
        let mut model = Self::new(n)?;
        for doc in docs {
            model.count_document(doc.as_ref());
        }
        model.build_millis = start.elapsed().as_secs_f64() * 1e3;
        Ok(model)
    }

    /// Builds from every document in `store`, in ingestion order.
    pub fn from_corpus(store: &CorpusStore, n: usize) -> Result<Self> {
        let start = Instant::now();
        let mut model = Self::new(n)?;
        let mut remap = vec![WordId::MAX; store.vocab().len()];
        let mut ids = Vec::new();
        for doc in store.documents() {
            ids.clear();
            for &id in doc.token_ids() {
                let slot = &mut remap[id as usize];
                if *slot == WordId::MAX {
                    *slot = model.vocab.intern(store.vocab().word(id));
                }
                ids.push(*slot);
            }
            model.count_ids(&ids);
        }
        model.build_millis = start.elapsed().as_secs_f64() * 1e3;
        Ok(model)
    }

    /// Merges one more document. Equivalent to having included it in the
    /// original `build` call.
    pub fn update<S: AsRef<str>>(&mut self, doc: &[S]) {
        let start = Instant::now();
        self.count_document(doc);
        self.build_millis += start.elapsed().as_secs_f64() * 1e3;
    }

    /// Like [`update`](Self::update) for a document already interned into
    /// this model's vocabulary.
    ///
    /// # Panics
    /// If any id is outside the vocabulary.
    pub fn update_ids(&mut self, ids: &[WordId]) {
        assert!(
            ids.iter().all(|&id| (id as usize) < self.vocab.len()),
            "word id outside model vocabulary"
        );
        self.count_ids(ids);
    }

    /// Streams one document's tokens into the model.
    pub fn feeder(&mut self) -> DocumentFeeder<'_> {
        DocumentFeeder {
            window: Vec::with_capacity(self.n),
            model: self,
        }
    }

    fn count_document<S: AsRef<str>>(&mut self, doc: &[S]) {
        let ids: Vec<WordId> = doc.iter().map(|w| self.vocab.intern(w.as_ref())).collect();
        self.count_ids(&ids);
    }

    fn count_ids(&mut self, ids: &[WordId]) {
        if ids.len() >= self.n {
            for window in ids.windows(self.n) {
                self.count_window(&window[..self.n - 1], window[self.n - 1], 1);
            }
        }
    }

    #[inline]
    fn count_window(&mut self, context: &[WordId], next: WordId, count: u64) {
        match self.table.get_mut(context) {
            Some(successors) => successors.add(next, count),
            None => {
                let mut successors = Successors::default();
                successors.add(next, count);
                self.table.insert(Context::from_slice(context), successors);
            }
        }
        self.total_ngrams += count;
        self.count_of_counts.take();
    }

    /// Adds every count from `other` (same order) into `self`.
    pub fn merge(&mut self, other: &NGramModel) -> Result<()> {
        if other.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot merge order-{} model into order-{} model",
                other.n, self.n
            )));
        }
        let remap: Vec<WordId> = other.vocab.iter().map(|w| self.vocab.intern(w)).collect();
        let mut context = Context::new();
        for (ctx, successors) in &other.table {
            context.clear();
            context.extend(ctx.iter().map(|&id| remap[id as usize]));
            for (word, count) in successors.iter() {
                self.count_window(&context, remap[word as usize], count);
            }
        }
        self.build_millis += other.build_millis;
        Ok(())
    }

    /// Drops every context whose summed next-word count is below `threshold`.
    /// Returns the number of contexts removed. The vocabulary is untouched.
    pub fn prune(&mut self, threshold: i64) -> Result<usize> {
        if threshold < 0 {
            return Err(Error::InvalidArgument(format!(
                "prune threshold must be non-negative, got {threshold}"
            )));
        }
        let threshold = threshold as u64;
        let before = self.table.len();
        self.table.retain(|_, s| s.total() >= threshold);
        let removed = before - self.table.len();
        if removed > 0 {
            self.total_ngrams = self.table.values().map(Successors::total).sum();
            self.count_of_counts.take();
        }
        Ok(removed)
    }

    /// Derives the order-`order` table from this one by grouping every
    /// stored n-gram on its leading `order` tokens. Each context key is itself
    /// an observed (n-1)-gram, so order `n - 1` counts equal the context
    /// totals; lower orders keep dropping trailing tokens. `order == n`
    /// returns a clone.
    pub fn marginalize(&self, order: usize) -> Result<NGramModel> {
        if order == 0 || order > self.n {
            return Err(Error::InvalidOrder {
                n: order,
                max: self.n,
            });
        }
        if order == self.n {
            return Ok(self.clone());
        }
        let mut lower = NGramModel::with_vocab(order, self.vocab.clone())?;
        for (ctx, successors) in &self.table {
            lower.count_window(&ctx[..order - 1], ctx[order - 1], successors.total());
        }
        Ok(lower)
    }

    /// Overrides the recorded build time, for callers that stream input
    /// through [`feeder`](Self::feeder) and time the whole pass.
    pub fn set_build_millis(&mut self, millis: f64) {
        self.build_millis = millis;
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn total_ngrams(&self) -> u64 {
        self.total_ngrams
    }

    pub fn distinct_contexts(&self) -> usize {
        self.table.len()
    }

    pub fn distinct_ngrams(&self) -> usize {
        self.table.values().map(Successors::len).sum()
    }

    /// `N_c`: how many distinct n-grams occur exactly `c` times.
    pub fn count_of_counts(&self) -> &BTreeMap<u64, u64> {
        self.count_of_counts.get_or_init(|| {
            let mut coc = BTreeMap::new();
            for successors in self.table.values() {
                for (_, count) in successors.iter() {
                    *coc.entry(count).or_insert(0) += 1;
                }
            }
            coc
        })
    }

    /// Number of distinct n-grams seen exactly once.
    pub fn singletons(&self) -> u64 {
        self.count_of_counts().get(&1).copied().unwrap_or(0)
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            n: self.n,
            distinct_contexts: self.distinct_contexts(),
            distinct_ngrams: self.distinct_ngrams(),
            total_ngrams: self.total_ngrams,
            vocabulary_size: self.vocab.len(),
            build_millis: self.build_millis,
        }
    }

    /// Resolves words to a context in this model's id space. `None` when any
    /// word is out of vocabulary (such a context cannot have been seen).
    pub fn context_ids<S: AsRef<str>>(&self, words: &[S]) -> Option<Context> {
        words.iter().map(|w| self.vocab.id(w.as_ref())).collect()
    }

    pub fn successors(&self, context: &[WordId]) -> Option<&Successors> {
        self.table.get(context)
    }

    /// Summed next-word count for `context`; 0 when unseen.
    pub fn context_total(&self, context: &[WordId]) -> u64 {
        self.table.get(context).map_or(0, Successors::total)
    }

    /// Next-word counts stored under `key`. Unseen or wrong-length keys give
    /// an empty map.
    pub fn lookup(&self, key: &ContextKey) -> BTreeMap<Token, u64> {
        if key.len() + 1 != self.n {
            return BTreeMap::new();
        }
        self.context_ids(key.tokens())
            .and_then(|ctx| self.table.get(&ctx[..]))
            .map(|s| {
                s.iter()
                    .map(|(w, c)| (Token::new(self.vocab.word(w)).expect("stored token"), c))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Iterates `(context ids, successors)` in unspecified order.
    pub fn contexts(&self) -> impl Iterator<Item = (&[WordId], &Successors)> + '_ {
        self.table.iter().map(|(k, v)| (&k[..], v))
    }

    pub fn render_context(&self, context: &[WordId]) -> String {
        let mut out = String::new();
        for (i, &id) in context.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.vocab.word(id));
        }
        out
    }

    /// All `(context, word, count)` triples sorted by rendered context, then
    /// word. This is the order the model file uses.
    pub fn canonical_entries(&self) -> Vec<(String, &str, u64)> {
        let mut contexts: Vec<(String, &Successors)> = self
            .table
            .iter()
            .map(|(k, v)| (self.render_context(k), v))
            .collect();
        contexts.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut out = Vec::with_capacity(self.distinct_ngrams());
        for (ctx, successors) in contexts {
            let mut words: Vec<(&str, u64)> = successors
                .iter()
                .map(|(w, c)| (self.vocab.word(w), c))
                .collect();
            words.sort_unstable_by(|a, b| a.0.cmp(b.0));
            out.extend(words.into_iter().map(|(w, c)| (ctx.clone(), w, c)));
        }
        out
    }

    /// Recomputes every cached aggregate from the table and compares.
    /// Intended for tests and debug assertions.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut total = 0u64;
        for (ctx, successors) in &self.table {
            if ctx.len() + 1 != self.n {
                return Err(format!(
                    "context of length {} in order-{} model",
                    ctx.len(),
                    self.n
                ));
            }
            if ctx.iter().any(|&id| id as usize >= self.vocab.len()) {
                return Err("context id outside vocabulary".into());
            }
            let mut sum = 0;
            for (word, count) in successors.iter() {
                if count == 0 {
                    return Err("zero count stored".into());
                }
                if word as usize >= self.vocab.len() {
                    return Err("word id outside vocabulary".into());
                }
                sum += count;
            }
            if sum != successors.total() {
                return Err(format!(
                    "context total {} != sum {}",
                    successors.total(),
                    sum
                ));
            }
            if successors.is_empty() {
                return Err("empty context stored".into());
            }
            total += sum;
        }
        if total != self.total_ngrams {
            return Err(format!(
                "total_ngrams {} != sum {}",
                self.total_ngrams, total
            ));
        }
        let weighted: u64 = self.count_of_counts().iter().map(|(c, n)| c * n).sum();
        if weighted != total {
            return Err(format!("sum c*N_c {weighted} != total {total}"));
        }
        Ok(())
    }
}

/// Logical equality: same order, same vocabulary set, same counts. Word ids
/// and build timings are ignored.
impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.total_ngrams == other.total_ngrams
            && self.table.len() == other.table.len()
            && self.vocab.len() == other.vocab.len()
            && self.vocab.sorted() == other.vocab.sorted()
            && self.canonical_entries() == other.canonical_entries()
    }
}

/// Incremental sink for one document's tokens. Windows span successive
/// `push` calls but never outlive the feeder.
pub struct DocumentFeeder<'a> {
    model: &'a mut NGramModel,
    window: Vec<WordId>,
}

impl DocumentFeeder<'_> {
    pub fn push(&mut self, word: &str) {
        let id = self.model.vocab.intern(word);
        let context_len = self.model.n - 1;
        if self.window.len() == context_len {
            self.model.count_window(&self.window, id, 1);
            if context_len > 0 {
                self.window.remove(0);
            }
        }
        if context_len > 0 {
            self.window.push(id);
        }
    }
}
