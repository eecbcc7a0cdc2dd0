//! Deterministic stand-in for a token-level transformer: word tokens,
//! reference-encoder token vectors and softmax attention derived from token
//! similarity. Lets the attention and mean-pooled context paths run without
//! exported model outputs.

use crate::context::{AttentionTensor, MentionSpan};
use crate::encoding::{fnv1a64, reference_encode, TokenEncodings, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\''
}

/// Runs of word characters become one token; every other non-space
/// character is a token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push(Token {
                text: text[s..i].to_owned(),
                start: s,
                end: i,
            });
        }
        if !c.is_whitespace() {
            out.push(Token {
                text: c.to_string(),
                start: i,
                end: i + c.len_utf8(),
            });
        }
    }
    if let Some(s) = word_start {
        out.push(Token {
            text: text[s..].to_owned(),
            start: s,
            end: text.len(),
        });
    }
    out
}

/// Inclusive range of tokens overlapping the byte range `[start, end)`.
pub fn token_span(tokens: &[Token], start: usize, end: usize) -> Option<(usize, usize)> {
    let first = tokens.iter().position(|t| t.end > start && t.start < end)?;
    let last = tokens.iter().rposition(|t| t.end > start && t.start < end)?;
    Some((first, last))
}

/// Token-level outputs for one article.
#[derive(Debug, Clone)]
pub struct ArticleTokens {
    pub tokens: Vec<String>,
    pub encodings: TokenEncodings,
    pub attention: AttentionTensor,
    /// Token range per mention, in the order given.
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticProvider {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// Softmax inverse temperature applied to token cosine.
    pub sharpness: f32,
}

impl Default for SyntheticProvider {
    fn default() -> Self {
        SyntheticProvider {
            dim: crate::encoding::REFERENCE_DIM,
            layers: 2,
            heads: 2,
            sharpness: 4.0,
        }
    }
}

impl SyntheticProvider {
    fn jitter(layer: usize, head: usize, row: usize, col: usize) -> f32 {
        let key = format!("{layer}:{head}:{row}:{col}");
        (fnv1a64(key.as_bytes()) % 1000) as f32 / 2000.0
    }

    /// Reference encoding of the token, or a one-hot bucket when its
    /// trigram signs cancel out (e.g. "33").
    fn token_vector(&self, token: &str) -> Result<Vector> {
        match reference_encode(token, self.dim) {
            Err(Error::ZeroNorm(_)) => {
                let mut v = vec![0f32; self.dim];
                v[(fnv1a64(token.as_bytes()) % self.dim as u64) as usize] = 1.0;
                Vector::normalized(v, token)
            }
            other => other,
        }
    }

    pub fn article(&self, text: &str, mentions: &[MentionSpan]) -> Result<ArticleTokens> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Err(Error::EmptyText);
        }
        let spans = mentions
            .iter()
            .map(|m| {
                token_span(&toks, m.start, m.end).ok_or(Error::InvalidSpan {
                    start: m.start,
                    end: m.end,
                    len: text.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vectors = toks
            .iter()
            .map(|t| self.token_vector(&t.text))
            .collect::<Result<Vec<_>>>()?;
        let k = toks.len();
        let mut values = Vec::with_capacity(self.layers * self.heads * k * k);
        let mut row = vec![0f32; k];
        for layer in 0..self.layers {
            for head in 0..self.heads {
                for r in 0..k {
                    for (c, slot) in row.iter_mut().enumerate() {
                        // a token's similarity to itself would swamp every row
                        let sim = if r == c { 0.0 } else { vectors[r].cosine(&vectors[c]) as f32 };
                        *slot = self.sharpness * sim + Self::jitter(layer, head, r, c);
                    }
                    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let sum: f32 = row.iter().map(|v| (v - max).exp()).sum();
                    values.extend(row.iter().map(|v| (v - max).exp() / sum));
                }
            }
        }
        let tokens: Vec<String> = toks.into_iter().map(|t| t.text).collect();
        let encodings = TokenEncodings::new(
            self.dim,
            tokens.clone(),
            vectors.into_iter().map(|v| v.as_slice().to_vec()).collect(),
        )?;
        Ok(ArticleTokens {
            tokens,
            encodings,
            attention: AttentionTensor::new(self.layers, self.heads, k, values)?,
            spans,
        })
    }
}
