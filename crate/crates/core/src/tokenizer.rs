//! Text normalization and token splitting.
//!
//! The default configuration lowercases, drops every character that is not an
//! ASCII letter or whitespace, and splits on whitespace runs. Character mode
//! emits one token per surviving non-whitespace character.

use std::borrow::Borrow;
use std::fmt;
use std::io::Read;
use std::ops::Deref;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest input accepted by [`throughput_probe`].
pub const MIN_PROBE_BYTES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    #[default]
    Word,
    Character,
}

impl std::str::FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenizerMode::Word),
            "char" | "character" => Ok(TokenizerMode::Character),
            other => Err(Error::InvalidArgument(format!(
                "unknown tokenizer mode {other:?} (expected word or character)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub mode: TokenizerMode,
    pub lowercase: bool,
    pub strip_non_letters: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            mode: TokenizerMode::Word,
            lowercase: true,
            strip_non_letters: true,
        }
    }
}

impl TokenizerConfig {
    pub fn characters() -> Self {
        Self {
            mode: TokenizerMode::Character,
            ..Self::default()
        }
    }

    /// Feeds the normalized form of `c` to `out`; whitespace passes through
    /// unchanged.
    #[inline]
    fn normalize_char(&self, c: char, mut out: impl FnMut(char)) {
        if c.is_ascii() {
            if c.is_ascii_alphabetic() {
                out(if self.lowercase {
                    c.to_ascii_lowercase()
                } else {
                    c
                });
            } else if c.is_ascii_whitespace() || !self.strip_non_letters || c.is_whitespace() {
                out(c);
            }
            return;
        }
        if c.is_whitespace() {
            out(c);
        } else if !self.strip_non_letters {
            if self.lowercase {
                c.to_lowercase().for_each(out);
            } else {
                out(c);
            }
        }
    }
}

/// A normalized lexical unit. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    /// Wraps `text` if it is a plausible token (non-empty, no whitespace).
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl Deref for Token {
    type Target = str;

    fn deref(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for Token {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Token {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Lowercases and strips according to `config`. Whitespace is preserved.
pub fn normalize(text: &str, config: &TokenizerConfig) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        config.normalize_char(c, |c| out.push(c));
    }
    out
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<Token> {
    let mut tokens = Vec::new();
    for_each_token(text, config, |t| tokens.push(Token(t.to_owned())));
    tokens
}

/// Decodes raw bytes, replacing invalid UTF-8 with U+FFFD, then tokenizes.
pub fn tokenize_bytes(bytes: &[u8], config: &TokenizerConfig) -> Vec<Token> {
    tokenize(&String::from_utf8_lossy(bytes), config)
}

/// Streams tokens to `sink` without allocating one `String` per token.
///
/// Produces exactly the sequence [`tokenize`] returns.
pub fn for_each_token(text: &str, config: &TokenizerConfig, mut sink: impl FnMut(&str)) {
    match config.mode {
        TokenizerMode::Word => {
            let mut word = String::with_capacity(32);
            let bytes = text.as_bytes();
            let mut i = 0;
            while i < bytes.len() {
                let b = bytes[i];
                if b < 0x80 {
                    i += 1;
                    if b.is_ascii_alphabetic() {
                        word.push(if config.lowercase {
                            b.to_ascii_lowercase()
                        } else {
                            b
                        } as char);
                    } else if b.is_ascii_whitespace() || b == 0x0b {
                        if !word.is_empty() {
                            sink(&word);
                            word.clear();
                        }
                    } else if !config.strip_non_letters {
                        word.push(b as char);
                    }
                    continue;
                }
                // Non-ASCII: decode the full scalar value.
                let c = text[i..].chars().next().expect("char boundary");
                i += c.len_utf8();
                if c.is_whitespace() {
                    if !word.is_empty() {
                        sink(&word);
                        word.clear();
                    }
                } else {
                    config.normalize_char(c, |c| word.push(c));
                }
            }
            if !word.is_empty() {
                sink(&word);
            }
        }
        TokenizerMode::Character => {
            let mut buf = [0u8; 4];
            for c in text.chars() {
                config.normalize_char(c, |c| {
                    if !c.is_whitespace() {
                        sink(c.encode_utf8(&mut buf));
                    }
                });
            }
        }
    }
}

/// Tokenizes everything `reader` yields, reading in bounded chunks.
///
/// Chunks are cut after the last ASCII whitespace byte, which is always a
/// UTF-8 boundary, so the token stream equals tokenizing the whole input at
/// once. Invalid UTF-8 is replaced with U+FFFD. Returns the byte count read.
pub fn for_each_token_in_reader<R: Read>(
    mut reader: R,
    config: &TokenizerConfig,
    mut sink: impl FnMut(&str),
) -> std::io::Result<u64> {
    const CHUNK: usize = 8 << 20;
    let mut buf: Vec<u8> = Vec::with_capacity(CHUNK);
    let mut total = 0u64;
    loop {
        let start = buf.len();
        buf.resize(start + CHUNK, 0);
        let read = loop {
            match reader.read(&mut buf[start..]) {
                Ok(n) => break n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        };
        buf.truncate(start + read);
        total += read as u64;
        if read == 0 {
            if !buf.is_empty() {
                for_each_token(&String::from_utf8_lossy(&buf), config, &mut sink);
            }
            return Ok(total);
        }
        let Some(cut) = buf
            .iter()
            .rposition(|&b| b.is_ascii_whitespace() || b == 0x0b)
        else {
            continue;
        };
        for_each_token(&String::from_utf8_lossy(&buf[..=cut]), config, &mut sink);
        buf.drain(..=cut);
    }
}

/// Counts tokens without materializing them.
pub fn count_tokens(text: &str, config: &TokenizerConfig) -> usize {
    let mut count = 0;
    for_each_token(text, config, |_| count += 1);
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputSample {
    pub tokens: usize,
    pub bytes: usize,
    pub seconds: f64,
    pub tokens_per_second: f64,
}

/// Times one full [`tokenize`] pass over `text`.
pub fn throughput_probe(text: &str, config: &TokenizerConfig) -> Result<ThroughputSample> {
    if text.len() < MIN_PROBE_BYTES {
        return Err(Error::MeasurementUnreliable {
            bytes: text.len(),
            min: MIN_PROBE_BYTES,
        });
    }
    let start = Instant::now();
    let tokens = tokenize(text, config);
    let seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    Ok(ThroughputSample {
        tokens: tokens.len(),
        bytes: text.len(),
        seconds,
        tokens_per_second: tokens.len() as f64 / seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        tokenize(text, &TokenizerConfig::default())
            .into_iter()
            .map(Token::into_string)
            .collect()
    }

    #[test]
    fn normalize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(
            normalize("The Cat, is Sleeping!", &cfg),
            "the cat is sleeping"
        );
        assert_eq!(normalize("", &cfg), "");
        assert_eq!(normalize("Hello123 world", &cfg), "hello world");
    }

    #[test]
    fn word_mode_examples() {
        assert_eq!(
            words("The cat is sleeping"),
            ["the", "cat", "is", "sleeping"]
        );
        assert_eq!(words("  a   b "), ["a", "b"]);
        assert_eq!(words("don't stop-gap"), ["dont", "stopgap"]);
        assert!(words("!!! 123 ...").is_empty());
    }

    #[test]
    fn character_mode_drops_whitespace() {
        let toks = tokenize("ab c", &TokenizerConfig::characters());
        assert_eq!(toks, ["a", "b", "c"]);
    }

    #[test]
    fn non_ascii_letters_are_stripped_by_default() {
        assert_eq!(words("café naïve"), ["caf", "nave"]);
        let keep = TokenizerConfig {
            strip_non_letters: false,
            ..TokenizerConfig::default()
        };
        let toks = tokenize("Café NAÏVE, ok", &keep);
        assert_eq!(toks, ["café", "naïve,", "ok"]);
    }

    #[test]
    fn unicode_whitespace_separates_words() {
        assert_eq!(
            words("one\u{00a0}two\u{2003}three"),
            ["one", "two", "three"]
        );
    }

    #[test]
    fn invalid_utf8_is_replaced_then_stripped() {
        let toks = tokenize_bytes(b"ab\xffcd ef", &TokenizerConfig::default());
        assert_eq!(toks, ["abcd", "ef"]);
    }

    #[test]
    fn case_can_be_preserved() {
        let cfg = TokenizerConfig {
            lowercase: false,
            ..TokenizerConfig::default()
        };
        assert_eq!(tokenize("The Cat", &cfg), ["The", "Cat"]);
    }

    #[test]
    fn probe_rejects_short_input() {
        let err = throughput_probe("", &TokenizerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MeasurementUnreliable { bytes: 0, .. }));
    }

    #[test]
    fn probe_counts_exactly() {
        let text = "the cat sleeps ".repeat(MIN_PROBE_BYTES / 15 + 1);
        let sample = throughput_probe(&text, &TokenizerConfig::default()).unwrap();
        assert!(sample.tokens_per_second > 0.0);
        assert_eq!(sample.tokens % 3, 0);
        assert_eq!(sample.tokens, 3 * (MIN_PROBE_BYTES / 15 + 1));
    }

    #[test]
    fn reader_matches_in_memory() {
        // Multi-byte characters and words straddling many small reads.
        let text = "Ünïcode wörds, and ASCII words\n".repeat(200_000);
        let cfg = TokenizerConfig::default();
        let mut streamed = Vec::new();
        let bytes =
            for_each_token_in_reader(text.as_bytes(), &cfg, |t| streamed.push(t.to_owned()))
                .unwrap();
        assert_eq!(bytes as usize, text.len());
        let expected: Vec<String> = tokenize(&text, &cfg)
            .into_iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(streamed, expected);
    }

    #[test]
    fn token_rejects_whitespace_and_empty() {
        assert!(Token::new("").is_none());
        assert!(Token::new("a b").is_none());
        assert_eq!(Token::new("ab").unwrap().as_str(), "ab");
    }

    #[test]
    fn mode_parses() {
        assert_eq!(
            "word".parse::<TokenizerMode>().unwrap(),
            TokenizerMode::Word
        );
        assert_eq!(
            "char".parse::<TokenizerMode>().unwrap(),
            TokenizerMode::Character
        );
        assert!("bpe".parse::<TokenizerMode>().is_err());
    }
}
