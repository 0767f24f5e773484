//! Word-level tokenizer.
//!
//! Text is split on whitespace, then the punctuation marks `,` `.` `(` `)`
//! are peeled off both ends of each chunk as tokens of their own. Interior
//! characters are left alone, so `0.2mm` and `-3.5` stay whole. Case is
//! preserved.

use serde::{Deserialize, Serialize};

const PEEL: &[char] = &[',', '.', '(', ')'];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Byte offsets `(start, end)` of each token in the source text.
    pub char_spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Build a sequence from bare tokens, with spans as if joined by single spaces.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> TokenSequence {
        let mut spans = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for t in tokens {
            let len = t.as_ref().len();
            spans.push((pos, pos + len));
            pos += len + 1;
        }
        TokenSequence {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            char_spans: spans,
        }
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut seq = TokenSequence::default();
    let mut push = |start: usize, end: usize| {
        seq.tokens.push(text[start..end].to_string());
        seq.char_spans.push((start, end));
    };

    for (chunk_start, chunk) in chunks(text) {
        let mut start = chunk_start;
        let mut end = chunk_start + chunk.len();
        while start < end && text[start..end].starts_with(PEEL) {
            push(start, start + 1);
            start += 1;
        }
        let mut trailing = Vec::new();
        while start < end && text[start..end].ends_with(PEEL) {
            trailing.push((end - 1, end));
            end -= 1;
        }
        if start < end {
            push(start, end);
        }
        for (s, e) in trailing.into_iter().rev() {
            push(s, e);
        }
    }
    seq
}

/// Whitespace-separated chunks with their byte offsets.
fn chunks(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace()
        .map(move |c| (c.as_ptr() as usize - text.as_ptr() as usize, c))
}
