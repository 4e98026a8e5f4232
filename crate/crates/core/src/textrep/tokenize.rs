//! Tokenizer: lowercase, split on non-letters, drop short tokens and stopwords.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Version tag of the bundled stopword list; bump when the list changes.
pub const STOPWORDS_VERSION: &str = "en-v1";

const STOPWORDS_RAW: &str = include_str!("stopwords_en_v1.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_RAW.split_whitespace().collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Split `text` into lowercase alphabetic tokens of length >= 2 that are not
/// stopwords. Anything other than an ASCII letter separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| t.len() >= 2)
        .map(str::to_ascii_lowercase)
        .filter(|t| !is_stopword(t))
        .collect()
}
