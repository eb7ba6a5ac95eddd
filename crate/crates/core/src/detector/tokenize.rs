//! Whitespace tokenizer that splits surrounding punctuation into its own
//! tokens while keeping `$`-prefixed amounts and numbers intact.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte range in the original text.
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chunk_start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_chunk(text, s, i, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    out
}

/// Token texts only.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

fn split_chunk(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let chunk = &text[start..end];
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut lo = 0;
    let mut hi = chars.len();
    let mut leading = Vec::new();
    while lo < hi && !is_word_char(chars[lo].1) {
        let keeps_dollar = chars[lo].1 == '$'
            && chars.get(lo + 1).is_some_and(|(_, n)| n.is_ascii_digit());
        if keeps_dollar {
            break;
        }
        leading.push(lo);
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && !is_word_char(chars[hi - 1].1) {
        hi -= 1;
        trailing.push(hi);
    }
    trailing.reverse();

    let byte = |k: usize| start + chars.get(k).map(|(b, _)| *b).unwrap_or(chunk.len());
    let mut push = |a: usize, b: usize| {
        let (s, e) = (byte(a), byte(b));
        out.push(Token {
            text: text[s..e].to_lowercase(),
            start: s,
            end: e,
        });
    };
    for k in leading {
        push(k, k + 1);
    }
    if lo < hi {
        push(lo, hi);
    }
    for k in trailing {
        push(k, k + 1);
    }
}
