use gramforge::tokenizer::{self, tokenize, TokenizerConfig};
use proptest::prelude::*;

/// Character-at-a-time reference: keep ASCII letters (lowercased) and
/// whitespace, split on whitespace.
fn reference(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if c.is_ascii_alphabetic() {
            current.push(c.to_ascii_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn words(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    tokenize(text, cfg)
        .into_iter()
        .map(|t| t.to_string())
        .collect()
}

proptest! {
    #[test]
    fn matches_reference(text in "\\PC{0,200}") {
        prop_assert_eq!(words(&text, &TokenizerConfig::default()), reference(&text));
    }

    #[test]
    fn matches_reference_on_prose(text in "[A-Za-z0-9 ,.'!?\t\n-]{0,300}") {
        prop_assert_eq!(words(&text, &TokenizerConfig::default()), reference(&text));
    }

    #[test]
    fn idempotent(text in "\\PC{0,200}") {
        let cfg = TokenizerConfig::default();
        let once = words(&text, &cfg).join(" ");
        prop_assert_eq!(words(&once, &cfg).join(" "), once);
    }

    #[test]
    fn reader_equals_in_memory(text in "[a-z \n]{0,500}") {
        let cfg = TokenizerConfig::default();
        let mut streamed = Vec::new();
        tokenizer::for_each_token_in_reader(text.as_bytes(), &cfg, |t| streamed.push(t.to_owned())).unwrap();
        prop_assert_eq!(streamed, words(&text, &cfg));
    }

    #[test]
    fn character_mode_emits_every_letter(text in "[a-zA-Z ]{0,100}") {
        let cfg = TokenizerConfig::characters();
        let expected: Vec<String> = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_ascii_lowercase().to_string())
            .collect();
        prop_assert_eq!(words(&text, &cfg), expected);
    }
}

#[test]
fn sentence_example() {
    assert_eq!(
        words("The cat is sleeping.", &TokenizerConfig::default()),
        ["the", "cat", "is", "sleeping"]
    );
    assert_eq!(
        words("Don't stop—it's 4 o'clock!", &TokenizerConfig::default()),
        ["dont", "stopits", "oclock"]
    );
}

#[test]
fn invalid_utf8_is_tolerated() {
    let bytes = b"caf\xff latte";
    let tokens: Vec<String> = tokenizer::tokenize_bytes(bytes, &TokenizerConfig::default())
        .into_iter()
        .map(|t| t.to_string())
        .collect();
    assert_eq!(tokens, ["caf", "latte"]);
}
