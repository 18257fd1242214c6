//! Whitespace tokenization and the reserved token space.
//!
//! Every raw text enters the engine through [`Tokenizer::tokenize`]. Raw
//! tokens that would collide with a reserved token are escaped with an extra
//! leading backslash, so the mask token, the segment separator and rendered
//! scalar tokens can never be produced from data.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Replaces a token hidden by a feature transform.
pub const MASK: &str = "[M]";

/// Separates segments: template fields, and the two halves of `Φ(X) ∪ {X}`.
pub const SEP: &str = "⟂";

/// Prefix shared by every reserved token other than [`MASK`].
const RESERVED_PREFIX: char = '⟂';

pub fn is_reserved(token: &str) -> bool {
    token == MASK || token.starts_with(RESERVED_PREFIX)
}

fn needs_escape(token: &str) -> bool {
    is_reserved(token.trim_start_matches('\\'))
}

/// Escape a single raw token. The map is injective: escaped tokens gain
/// exactly one backslash and nothing else changes.
pub fn escape_token(token: &str) -> String {
    if needs_escape(token) {
        format!("\\{token}")
    } else {
        token.to_string()
    }
}

/// Escape every colliding whitespace-delimited token of `text`, leaving the
/// surrounding whitespace untouched.
pub fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let ws = rest.len() - rest.trim_start().len();
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..end];
        if needs_escape(token) {
            out.push('\\');
        }
        out.push_str(token);
        rest = &rest[end..];
    }
    out
}

/// Number of whitespace-delimited words, the length unit used by the
/// length-based features and filters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, raw: &str) -> Tokens {
        Tokens(raw.split_whitespace().map(|t| self.token(t)).collect())
    }

    /// Tokenize text that was produced by the engine itself (templates whose
    /// fields were escaped with [`escape_text`]). Reserved tokens keep their
    /// meaning and escaped tokens are kept as they are.
    pub fn tokenize_engine(&self, text: &str) -> Tokens {
        Tokens(
            text.split_whitespace()
                .map(|t| {
                    if is_reserved(t) || t.starts_with('\\') {
                        t.to_string()
                    } else {
                        self.normalize(t)
                    }
                })
                .collect(),
        )
    }

    fn normalize(&self, token: &str) -> String {
        if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    /// Normalize and escape one raw token.
    pub fn token(&self, raw: &str) -> String {
        escape_token(&self.normalize(raw))
    }
}

/// A token sequence as consumed by predictive families.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tokens(pub Vec<String>);

impl Tokens {
    pub fn new(tokens: Vec<String>) -> Self {
        Tokens(tokens)
    }

    pub fn from_text(text: &str) -> Self {
        Tokens(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn push(&mut self, token: impl Into<String>) {
        self.0.push(token.into());
    }

    pub fn extend(&mut self, other: &Tokens) {
        self.0.extend(other.0.iter().cloned());
    }

    /// Single-space join. Tokens never contain whitespace, so the joined
    /// form identifies the sequence.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for Tokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reserved_tokens_are_never_produced() {
        let tok = Tokenizer::default();
        let t = tok.tokenize("a [M] ⟂ ⟂x \\[M] b");
        assert_eq!(t.0, vec!["a", "[m]", "\\⟂", "\\⟂x", "\\[m]", "b"]);
        let t = Tokenizer { lowercase: false }.tokenize("[M] \\[M]");
        assert_eq!(t.0, vec!["\\[M]", "\\\\[M]"]);
        assert!(t.iter().all(|t| !is_reserved(t)));
    }

    #[test]
    fn escape_text_keeps_whitespace() {
        assert_eq!(escape_text("  a ⟂\tb\n[M] "), "  a \\⟂\tb\n\\[M] ");
    }

    #[test]
    fn engine_tokenization_respects_reserved() {
        let tok = Tokenizer::default();
        let text = format!("CONTEXT: {} {SEP} Hi", escape_text("x ⟂"));
        assert_eq!(tok.tokenize_engine(&text).0, vec!["context:", "x", "\\⟂", SEP, "hi"]);
    }

    #[test]
    fn word_count_is_whitespace_based() {
        assert_eq!(word_count("  one two\tthree\n"), 3);
        assert_eq!(word_count(""), 0);
    }

    proptest! {
        #[test]
        fn escaping_is_injective(a in "[\\\\\\[M\\]⟂a ]{0,6}", b in "[\\\\\\[M\\]⟂a ]{0,6}") {
            let tok = Tokenizer { lowercase: false };
            if tok.tokenize(&a) == tok.tokenize(&b) {
                prop_assert_eq!(Tokens::from_text(&a), Tokens::from_text(&b));
            }
            prop_assert!(tok.tokenize(&a).iter().all(|t| !is_reserved(t)));
        }
    }
}
