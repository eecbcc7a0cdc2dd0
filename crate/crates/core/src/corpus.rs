//! Annotated corpus ingest and abbreviation expansion.
//!
//! Articles are line-delimited JSON:
//! `{"id","title","abstract","mentions":[{"start","end","text","cui"}]}` with
//! byte offsets into `title + "\n" + abstract`. Abbreviations are
//! tab-separated `<article_id>\t<short>\t<long>` lines.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::MentionSpan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMention {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub cui: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub mentions: Vec<RawMention>,
}

#[derive(Debug, Clone)]
pub struct Article {
    pub id: String,
    pub text: String,
    /// Ordered by start offset.
    pub mentions: Vec<MentionSpan>,
}

impl Article {
    pub fn from_record(rec: ArticleRecord, file: &str, line: usize) -> Result<Self> {
        let text = format!("{}\n{}", rec.title, rec.abstract_text);
        let mut seen = HashSet::new();
        let mut mentions = Vec::with_capacity(rec.mentions.len());
        for m in rec.mentions {
            if !seen.insert((m.start, m.end)) {
                return Err(Error::MalformedRecord {
                    file: file.to_owned(),
                    line,
                    reason: format!(
                        "mention {}..{} in {} carries more than one gold annotation",
                        m.start, m.end, rec.id
                    ),
                });
            }
            let span = MentionSpan {
                article_id: rec.id.clone(),
                start: m.start,
                end: m.end,
                token_range: None,
                surface: m.text,
                gold_cui: m.cui,
            };
            span.validate(&text).map_err(|e| Error::MalformedRecord {
                file: file.to_owned(),
                line,
                reason: format!("{e} ({:?})", span.surface),
            })?;
            mentions.push(span);
        }
        mentions.sort_by_key(|m| (m.start, m.end));
        Ok(Article {
            id: rec.id,
            text,
            mentions,
        })
    }

    /// True when two mention spans overlap.
    pub fn has_overlaps(&self) -> bool {
        self.mentions.windows(2).any(|w| w[1].start < w[0].end)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub articles: Vec<Article>,
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut articles = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ArticleRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    file: name.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if !ids.insert(rec.id.clone()) {
                return Err(Error::MalformedRecord {
                    file: name.clone(),
                    line: i + 1,
                    reason: format!("duplicate article id {}", rec.id),
                });
            }
            articles.push(Article::from_record(rec, &name, i + 1)?);
        }
        Ok(Corpus { articles })
    }

    pub fn mention_count(&self) -> usize {
        self.articles.iter().map(|a| a.mentions.len()).sum()
    }

    /// `(article index, mention)` pairs in corpus order.
    pub fn mentions(&self) -> impl Iterator<Item = (usize, &MentionSpan)> + '_ {
        self.articles
            .iter()
            .enumerate()
            .flat_map(|(i, a)| a.mentions.iter().map(move |m| (i, m)))
    }
}

/// Per-article short form to long form map.
#[derive(Debug, Clone, Default)]
pub struct AbbreviationMap {
    map: HashMap<String, HashMap<String, String>>,
}

impl AbbreviationMap {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut map: HashMap<String, HashMap<String, String>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
                return Err(Error::MalformedRecord {
                    file: file.to_owned(),
                    line: i + 1,
                    reason: "expected <article_id>\\t<short>\\t<long>".into(),
                });
            }
            map.entry(fields[0].to_owned())
                .or_default()
                .insert(fields[1].trim().to_owned(), fields[2].trim().to_owned());
        }
        Ok(AbbreviationMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.map.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Replaces every whitespace-delimited word of `surface` that is a known
    /// short form of `article_id` with its long form.
    pub fn expand(&self, article_id: &str, surface: &str) -> String {
        let Some(forms) = self.map.get(article_id) else {
            return surface.to_owned();
        };
        if let Some(long) = forms.get(surface.trim()) {
            return long.clone();
        }
        if !surface.split_whitespace().any(|w| forms.contains_key(w)) {
            return surface.to_owned();
        }
        surface
            .split_whitespace()
            .map(|w| forms.get(w).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
