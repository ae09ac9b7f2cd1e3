//! Deterministic tokenization into subword-like units, shared by the tag
//! aligner and the fusion encoder, plus character n-gram extraction for chrF.
//!
//! The rule scheme NFC-normalizes the input, optionally lowercases it, splits
//! on whitespace and then splits every punctuation character into its own
//! token, so `"don't stop"` becomes `["don", "'", "t", "stop"]`. The char
//! scheme falls back to one token per non-whitespace character. Both schemes
//! truncate to `max_length` tokens, keeping the front of the sequence.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Default truncation length, in tokens.
pub const DEFAULT_MAX_LENGTH: usize = 512;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
}

/// Tokenization rule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerScheme {
    /// Whitespace split with punctuation separated into single-char tokens.
    Rule,
    /// One token per non-whitespace character.
    Char,
}

impl std::str::FromStr for TokenizerScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Self::Rule),
            "char" => Ok(Self::Char),
            other => Err(format!("unknown tokenizer scheme `{other}`")),
        }
    }
}

impl std::fmt::Display for TokenizerScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Rule => write!(f, "rule"),
            Self::Char => write!(f, "char"),
        }
    }
}

/// Full tokenizer configuration. The same config must be used for the
/// hypothesis and the reference so that tag alignment stays meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub scheme: TokenizerScheme,
    pub lowercase: bool,
    pub max_length: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            scheme: TokenizerScheme::Rule,
            lowercase: false,
            max_length: DEFAULT_MAX_LENGTH,
        }
    }
}

/// Pluggable tokenizer interface; downstream modules depend only on
/// [`TokenSequence`], so a learned subword scheme can be swapped in later.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> TokenSequence;
}

impl Tokenizer for TokenizerConfig {
    fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, self)
    }
}

/// An ordered sequence of non-empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Builds a sequence from raw tokens, dropping empty strings.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Joining rule: single spaces. Tokenizing the result reproduces the
    /// same sequence (see the idempotence test).
    pub fn detokenize(&self) -> String {
        self.0.join(" ")
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Tokenizes `text` under the given scheme. Total function: empty input
/// yields an empty sequence, any non-empty input yields at least one token
/// unless it is all whitespace.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> TokenSequence {
    let normalized: String = text.nfc().collect();
    let normalized = if config.lowercase {
        normalized.to_lowercase()
    } else {
        normalized
    };

    let mut tokens: Vec<String> = Vec::new();
    match config.scheme {
        TokenizerScheme::Rule => {
            for chunk in normalized.split_whitespace() {
                let mut word = String::new();
                for c in chunk.chars() {
                    if is_word_char(c) {
                        word.push(c);
                    } else {
                        if !word.is_empty() {
                            tokens.push(std::mem::take(&mut word));
                        }
                        tokens.push(c.to_string());
                    }
                }
                if !word.is_empty() {
                    tokens.push(word);
                }
            }
        }
        TokenizerScheme::Char => {
            tokens.extend(
                normalized
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| c.to_string()),
            );
        }
    }

    tokens.truncate(config.max_length);
    TokenSequence(tokens)
}

/// All contiguous character n-grams of `text` as a count multiset.
/// `strip_whitespace` removes every whitespace character before extraction.
pub fn char_ngrams(
    text: &str,
    n: usize,
    strip_whitespace: bool,
) -> Result<HashMap<String, usize>, TextError> {
    if n == 0 {
        return Err(TextError::InvalidOrder);
    }
    let chars: Vec<char> = if strip_whitespace {
        text.chars().filter(|c| !c.is_whitespace()).collect()
    } else {
        text.chars().collect()
    };

    let mut grams: HashMap<String, usize> = HashMap::new();
    if chars.len() >= n {
        for window in chars.windows(n) {
            *grams.entry(window.iter().collect()).or_insert(0) += 1;
        }
    }
    Ok(grams)
}
