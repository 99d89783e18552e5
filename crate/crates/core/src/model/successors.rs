use rustc_hash::FxHashMap;

use crate::vocab::WordId;

// Most contexts have a handful of successors; a linear scan beats hashing
// until this many.
const SPILL_AT: usize = 16;

#[derive(Debug, Clone)]
enum Slots {
    Inline(Vec<(WordId, u64)>),
    Spilled(FxHashMap<WordId, u64>),
}

impl Default for Slots {
    fn default() -> Self {
        Slots::Inline(Vec::new())
    }
}

/// Next-word counts under one context, with their cached sum.
#[derive(Debug, Clone, Default)]
pub struct Successors {
    total: u64,
    slots: Slots,
}

impl Successors {
    #[inline]
    pub(crate) fn add(&mut self, word: WordId, count: u64) {
        debug_assert!(count > 0);
        debug_assert!(self.total.checked_add(count).is_some(), "count overflow");
        self.total += count;
        match &mut self.slots {
            Slots::Inline(entries) => {
                if let Some(entry) = entries.iter_mut().find(|(w, _)| *w == word) {
                    entry.1 += count;
                } else if entries.len() < SPILL_AT {
                    entries.push((word, count));
                } else {
                    let mut map: FxHashMap<WordId, u64> = entries.drain(..).collect();
                    map.insert(word, count);
                    self.slots = Slots::Spilled(map);
                }
            }
            Slots::Spilled(map) => *map.entry(word).or_insert(0) += count,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, word: WordId) -> u64 {
        match &self.slots {
            Slots::Inline(entries) => entries
                .iter()
                .find(|(w, _)| *w == word)
                .map_or(0, |(_, c)| *c),
            Slots::Spilled(map) => map.get(&word).copied().unwrap_or(0),
        }
    }

    /// Number of distinct next words.
    pub fn len(&self) -> usize {
        match &self.slots {
            Slots::Inline(entries) => entries.len(),
            Slots::Spilled(map) => map.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(word, count)` pairs in unspecified order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (WordId, u64)> + '_> {
        match &self.slots {
            Slots::Inline(entries) => Box::new(entries.iter().copied()),
            Slots::Spilled(map) => Box::new(map.iter().map(|(&w, &c)| (w, c))),
        }
    }
}
