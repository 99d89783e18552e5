use indexmap::IndexSet;
use rustc_hash::FxBuildHasher;

/// Dense integer id for an interned word.
pub type WordId = u32;

/// Insertion-ordered string interner. Ids are dense and never reused.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    words: IndexSet<Box<str>, FxBuildHasher>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn intern(&mut self, word: &str) -> WordId {
        if let Some(id) = self.words.get_index_of(word) {
            return id as WordId;
        }
        let (id, _) = self.words.insert_full(word.into());
        assert!(id < WordId::MAX as usize, "vocabulary exceeds id space");
        id as WordId
    }

    #[inline]
    pub fn id(&self, word: &str) -> Option<WordId> {
        self.words.get_index_of(word).map(|i| i as WordId)
    }

    #[inline]
    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.words.iter().map(|w| &**w)
    }

    /// Words in byte-lexicographic order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.iter().collect();
        words.sort_unstable();
        words
    }
}
