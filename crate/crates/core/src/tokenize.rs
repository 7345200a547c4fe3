//! Pluggable tokenization.
//!
//! The engine only needs two things from a tokenizer: how many tokens a text
//! has, and where each token sits in the source so chunks can be cut out of
//! the original text without re-joining tokens.

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub trait Tokenizer: Send + Sync {
    /// Byte spans of every token in `text`, in order.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

/// Splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (idx, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    spans.push(s..idx);
                }
            } else if start.is_none() {
                start = Some(idx);
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Approximates subword tokenizers by cutting the text into windows of
/// roughly `bytes_per_token` bytes, snapped to char boundaries.
#[derive(Debug, Clone, Copy)]
pub struct ByteApproxTokenizer {
    pub bytes_per_token: usize,
}

impl Default for ByteApproxTokenizer {
    fn default() -> Self {
        Self { bytes_per_token: 4 }
    }
}

impl Tokenizer for ByteApproxTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let step = self.bytes_per_token.max(1);
        let mut spans = Vec::with_capacity(text.len() / step + 1);
        let mut start = 0;
        while start < text.len() {
            let mut end = (start + step).min(text.len());
            while !text.is_char_boundary(end) {
                end += 1;
            }
            spans.push(start..end);
            start = end;
        }
        spans
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    Bytes,
}

pub fn build_tokenizer(kind: TokenizerKind, bytes_per_token: usize) -> Box<dyn Tokenizer> {
    match kind {
        TokenizerKind::Whitespace => Box::new(WhitespaceTokenizer),
        TokenizerKind::Bytes => Box::new(ByteApproxTokenizer { bytes_per_token }),
    }
}

/// A source text together with its token spans.
#[derive(Debug, Clone)]
pub struct TokenizedText<'a> {
    source: &'a str,
    spans: Vec<Range<usize>>,
}

impl<'a> TokenizedText<'a> {
    pub fn new(source: &'a str, tokenizer: &dyn Tokenizer) -> Self {
        Self {
            source,
            spans: tokenizer.spans(source),
        }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Source text covering tokens `range` (token offsets, end exclusive).
    pub fn slice(&self, range: Range<usize>) -> &'a str {
        if range.start >= range.end {
            return "";
        }
        let from = self.spans[range.start].start;
        let to = self.spans[range.end - 1].end;
        &self.source[from..to]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_counts() {
        let tok = WhitespaceTokenizer;
        assert_eq!(tok.count(""), 0);
        assert_eq!(tok.count("a b c"), 3);
        assert_eq!(tok.count("  a\n\tb  "), 2);
        assert_eq!(tok.spans("ab  cd"), vec![0..2, 4..6]);
    }

    #[test]
    fn whitespace_count_is_additive() {
        let tok = WhitespaceTokenizer;
        let x = "the quick brown";
        let y = "fox jumps";
        assert_eq!(tok.count(&format!("{x} {y}")), tok.count(x) + tok.count(y));
    }

    #[test]
    fn byte_approx_respects_char_boundaries() {
        let tok = ByteApproxTokenizer { bytes_per_token: 3 };
        let text = "héllo wörld";
        let spans = tok.spans(text);
        let rebuilt: String = spans.iter().map(|s| &text[s.clone()]).collect();
        assert_eq!(rebuilt, text);
        assert!(spans.iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn slice_keeps_original_layout() {
        let text = "one two\nthree  four";
        let tt = TokenizedText::new(text, &WhitespaceTokenizer);
        assert_eq!(tt.len(), 4);
        assert_eq!(tt.slice(1..3), "two\nthree");
        assert_eq!(tt.slice(2..2), "");
    }
}
