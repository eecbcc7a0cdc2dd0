//! Query contextualisation: neighbouring words, attention-selected context
//! words, and mean-pooled token encodings.
//!
//! ATTN v1 layout (little-endian):
//!
//! ```text
//! "ATTN" | u8 version=1 | u32 layers | u32 heads | u32 k
//! layers x heads x k x k f32, indexed [layer][head][row][col]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::encoding::{mean_pool, TokenEncodings, Vector};
use crate::error::{Error, Result};

const ATTN_MAGIC: &[u8; 4] = b"ATTN";
const FORMAT_VERSION: u8 = 1;

/// Default number of words taken on each side of a mention.
pub const DEFAULT_WINDOW: usize = 2;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// A gold-annotated mention inside an article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub article_id: String,
    /// Byte offsets `[start, end)` into the article text.
    pub start: usize,
    pub end: usize,
    /// Inclusive word-piece range `[c, d]`, when token alignment is known.
    #[serde(default)]
    pub token_range: Option<(usize, usize)>,
    pub surface: String,
    pub gold_cui: String,
}

impl MentionSpan {
    pub fn validate(&self, text: &str) -> Result<()> {
        let ok = self.start < self.end
            && self.end <= text.len()
            && text.is_char_boundary(self.start)
            && text.is_char_boundary(self.end)
            && text[self.start..self.end] == self.surface;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpan {
                start: self.start,
                end: self.end,
                len: text.len(),
            })
        }
    }

    pub fn word_count(&self) -> usize {
        self.surface.split_whitespace().count()
    }
}

/// Up to `w` whitespace-delimited words before and after the mention, joined
/// with single spaces around the mention surface.
pub fn neighboring_context(text: &str, span: &MentionSpan, w: usize) -> Result<String> {
    span.validate(text)?;
    Ok(surround(text, span.start, span.end, &span.surface, w))
}

/// Like [`neighboring_context`] but with a caller-supplied middle, e.g. an
/// abbreviation-expanded surface. Offsets must already be validated.
pub fn surround(text: &str, start: usize, end: usize, middle: &str, w: usize) -> String {
    if w == 0 {
        return middle.to_owned();
    }
    let before: Vec<&str> = text[..start].split_whitespace().collect();
    let after = text[end..].split_whitespace().take(w);
    let mut parts: Vec<&str> = before[before.len().saturating_sub(w)..].to_vec();
    parts.push(middle);
    parts.extend(after);
    parts.join(" ")
}

/// Most common items, longest first: keeps only the values reaching the
/// maximal count, ordered by length descending then lexicographically.
pub fn sort_mcbl<S: AsRef<str>>(items: &[S]) -> Result<Vec<String>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("sort_mcbl items"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for it in items {
        *counts.entry(it.as_ref()).or_default() += 1;
    }
    let max = *counts.values().max().expect("non-empty");
    let mut best: Vec<&str> = counts
        .into_iter()
        .filter(|&(_, c)| c == max)
        .map(|(s, _)| s)
        .collect();
    best.sort_by(|a, b| {
        b.chars()
            .count()
            .cmp(&a.chars().count())
            .then_with(|| a.cmp(b))
    });
    Ok(best.into_iter().map(str::to_owned).collect())
}

/// Per-layer, per-head `k x k` attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    k: usize,
    values: Vec<f32>,
}

impl AttentionTensor {
    pub fn new(layers: usize, heads: usize, k: usize, values: Vec<f32>) -> Result<Self> {
        if layers == 0 || heads == 0 || k == 0 {
            return Err(Error::EmptyInput("attention tensor dimensions"));
        }
        let expected = layers * heads * k * k;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("attention values must be finite".into()));
        }
        Ok(AttentionTensor {
            layers,
            heads,
            k,
            values,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, layer: usize, head: usize, row: usize, col: usize) -> f32 {
        let k = self.k;
        self.values[((layer * self.heads + head) * k + row) * k + col]
    }

    /// Row of the largest value in `col` among rows `from..k`; the lowest row
    /// wins ties.
    fn argmax_row(&self, layer: usize, head: usize, col: usize, from: usize) -> usize {
        let mut best = from;
        let mut best_val = self.get(layer, head, from, col);
        for row in from + 1..self.k {
            let v = self.get(layer, head, row, col);
            if v > best_val {
                best = row;
                best_val = v;
            }
        }
        best
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = Reader::new(reader, "ATTN");
        r.header(ATTN_MAGIC, FORMAT_VERSION)?;
        let layers = r.u32("layers")? as usize;
        let heads = r.u32("heads")? as usize;
        let k = r.u32("k")? as usize;
        let values = r.f32s(layers * heads * k * k, "attention values")?;
        r.finish()?;
        AttentionTensor::new(layers, heads, k, values)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_all(&mut w, ATTN_MAGIC, "ATTN")?;
        binio::write_all(&mut w, &[FORMAT_VERSION], "ATTN")?;
        for n in [self.layers, self.heads, self.k] {
            binio::write_all(&mut w, &(n as u32).to_le_bytes(), "ATTN")?;
        }
        binio::write_f32s(&mut w, &self.values, "ATTN")?;
        w.flush().map_err(|e| Error::io("ATTN", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f))
    }
}

/// Lowercased stopword set.
#[derive(Debug, Clone)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn from_lines(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        )
    }

    pub fn english() -> Self {
        Self::from_lines(DEFAULT_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stopwords(HashSet::new())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Ok(Self::from_lines(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

/// Context words picked from attention for the mention tokens `[c, d]`,
/// before stopword removal.
///
/// Per layer and head, each mention column takes the token of its strongest
/// row among rows `c..k`; the head keeps the top [`sort_mcbl`] token of those,
/// the layer keeps the top token over its heads, and the two top tokens over
/// all layers are returned.
pub fn attention_context(
    attn: &AttentionTensor,
    tokens: &[String],
    span: (usize, usize),
) -> Result<Vec<String>> {
    let (c, d) = span;
    if tokens.len() != attn.k() {
        return Err(Error::DimensionMismatch {
            expected: attn.k(),
            found: tokens.len(),
        });
    }
    if c > d || d >= attn.k() {
        return Err(Error::InvalidSpan {
            start: c,
            end: d,
            len: attn.k(),
        });
    }
    let mut layer_reps = Vec::with_capacity(attn.layers());
    for layer in 0..attn.layers() {
        let mut head_reps = Vec::with_capacity(attn.heads());
        for head in 0..attn.heads() {
            let column_reps: Vec<&str> = (c..=d)
                .map(|col| tokens[attn.argmax_row(layer, head, col, c)].as_str())
                .collect();
            head_reps.push(sort_mcbl(&column_reps)?.swap_remove(0));
        }
        layer_reps.push(sort_mcbl(&head_reps)?.swap_remove(0));
    }
    let mut top = sort_mcbl(&layer_reps)?;
    top.truncate(2);
    Ok(top)
}

/// Enriched mention `"<mention>: <w1>,<w2>"`; the mention is returned as is
/// when every context word is a stopword.
pub fn attention_enrich(
    attn: &AttentionTensor,
    tokens: &[String],
    span: (usize, usize),
    mention: &str,
    stopwords: &Stopwords,
) -> Result<String> {
    let context: Vec<String> = attention_context(attn, tokens, span)?
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect();
    if context.is_empty() {
        Ok(mention.to_owned())
    } else {
        Ok(format!("{mention}: {}", context.join(",")))
    }
}

/// Mean-pooled encoding of the mention tokens `[c, d]`.
pub fn implicit_query(encodings: &TokenEncodings, span: (usize, usize)) -> Result<Vector> {
    mean_pool(encodings, span.0, span.1)
}

/// Word-piece ranges for an article's mentions, in mention order. Written by
/// the exporter next to each TOKE file as `<article_id>.spans.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanSidecar {
    pub article_id: String,
    pub spans: Vec<(usize, usize)>,
}

impl SpanSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::MalformedRecord {
            file: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), self).map_err(|e| Error::Config(e.to_string()))
    }
}
