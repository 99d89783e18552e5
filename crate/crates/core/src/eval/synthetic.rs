//! Deterministic English-like text for scaling benchmarks.
//!
//! Words come from a fixed pseudo-vocabulary; each word has a handful of
//! preferred successors, with occasional jumps to a frequent word, so the
//! number of distinct n-grams stays bounded as the corpus grows, as it does
//! for natural text.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    words: Vec<String>,
    successors: Vec<Vec<u32>>,
    jump_probability: f64,
    frequent: usize,
    rng: ChaCha8Rng,
    current: u32,
}

const LETTERS: &[u8] = b"etaoinshrdlcumwfgypbvkjxqz";

impl SyntheticCorpus {
    pub fn new(seed: u64) -> Self {
        Self::with_shape(seed, 5_000, 6)
    }

    pub fn with_shape(seed: u64, vocabulary: usize, branching: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = FxHashSet::default();
        let mut words = Vec::with_capacity(vocabulary);
        while words.len() < vocabulary {
            let len = rng.gen_range(2..=9);
            // Skew toward frequent letters.
            let word: String = (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    LETTERS[(r * r * LETTERS.len() as f64) as usize] as char
                })
                .collect();
            if seen.insert(word.clone()) {
                words.push(word);
            }
        }
        let successors = (0..vocabulary)
            .map(|_| {
                (0..branching)
                    .map(|_| rng.gen_range(0..vocabulary as u32))
                    .collect()
            })
            .collect();
        Self {
            words,
            successors,
            jump_probability: 0.02,
            frequent: vocabulary.min(200),
            rng,
            current: 0,
        }
    }

    pub fn next_word(&mut self) -> &str {
        let next = if self.rng.gen_bool(self.jump_probability) {
            self.rng.gen_range(0..self.frequent as u32)
        } else {
            let options = &self.successors[self.current as usize];
            let r: f64 = self.rng.gen();
            options[(r * r * options.len() as f64) as usize]
        };
        self.current = next;
        &self.words[next as usize]
    }

    /// Writes roughly `bytes` bytes (never fewer) of text, 16 words per line.
    pub fn write_to<W: Write>(&mut self, mut out: W, bytes: u64) -> io::Result<u64> {
        let mut written = 0u64;
        let mut line = String::with_capacity(256);
        while written < bytes {
            line.clear();
            for i in 0..16 {
                if i > 0 {
                    line.push(' ');
                }
                let word = self.next_word().to_owned();
                line.push_str(&word);
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
            written += line.len() as u64;
        }
        out.flush()?;
        Ok(written)
    }

    pub fn generate(&mut self, bytes: u64) -> String {
        let mut buf = Vec::with_capacity(bytes as usize + 256);
        self.write_to(&mut buf, bytes).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = SyntheticCorpus::new(7).generate(10_000);
        let b = SyntheticCorpus::new(7).generate(10_000);
        let c = SyntheticCorpus::new(8).generate(10_000);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.len() >= 10_000);
        assert!(a
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b == b' ' || b == b'\n'));
    }
}
