//! Prototype space over every (entity, alias) pair and exact top-k cosine
//! search.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{self, EmbeddingStore, TextEncoder, Vector};
use crate::error::{Error, Result};
use crate::ontology::OntologySnapshot;

/// Rows per parallel partition when a single query scans the space.
const PARTITION_ROWS: usize = 32 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasMeta {
    pub cui: String,
    pub alias: String,
    pub alias_index: usize,
}

impl AliasMeta {
    /// Embedding id convention shared with the exporter.
    pub fn embedding_id(&self) -> String {
        format!("{}#{}", self.cui, self.alias_index)
    }
}

/// Where alias embeddings come from.
pub enum EmbeddingSource<'a> {
    Store(&'a EmbeddingStore),
    Encoder(&'a dyn TextEncoder),
}

/// Which aliases of each entity become rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliasSelection {
    All,
    CanonicalOnly,
}

/// Dense row-major matrix of unit alias embeddings.
#[derive(Debug, Clone)]
pub struct PrototypeSpace {
    dim: usize,
    data: Vec<f32>,
    meta: Vec<AliasMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cui: String,
    pub alias: String,
    pub score: f64,
}

/// Score descending, then cui and alias ascending.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.cui.cmp(&b.cui))
        .then_with(|| a.alias.cmp(&b.alias))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// First `k` alias candidates.
    pub fn truncated(&self, k: usize) -> CandidateSet {
        CandidateSet {
            query_id: self.query_id.clone(),
            candidates: self.candidates.iter().take(k).cloned().collect(),
        }
    }
}

impl PrototypeSpace {
    pub fn build(
        snapshot: &OntologySnapshot,
        source: EmbeddingSource<'_>,
        selection: AliasSelection,
    ) -> Result<Self> {
        let mut meta = Vec::with_capacity(snapshot.alias_count());
        for entity in snapshot.active() {
            let take = match selection {
                AliasSelection::All => entity.aliases.len(),
                AliasSelection::CanonicalOnly => 1,
            };
            for (i, alias) in entity.aliases.iter().take(take).enumerate() {
                meta.push(AliasMeta {
                    cui: entity.cui.clone(),
                    alias: alias.clone(),
                    alias_index: i,
                });
            }
        }
        let dim = match &source {
            EmbeddingSource::Store(s) => s.dim(),
            EmbeddingSource::Encoder(e) => e.dim(),
        };
        let vectors: Vec<Vector> = match source {
            EmbeddingSource::Store(store) => meta
                .iter()
                .map(|m| {
                    let id = m.embedding_id();
                    store.get(&id).cloned().ok_or(Error::MissingEmbedding(id))
                })
                .collect::<Result<_>>()?,
            EmbeddingSource::Encoder(enc) => meta
                .par_iter()
                .map(|m| enc.encode(&m.alias))
                .collect::<Result<_>>()?,
        };
        let mut data = Vec::with_capacity(vectors.len() * dim);
        for v in &vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            data.extend_from_slice(v.as_slice());
        }
        Ok(PrototypeSpace { dim, data, meta })
    }

    /// Assembles a space from explicit rows.
    pub fn from_rows(dim: usize, rows: Vec<(AliasMeta, Vector)>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut meta = Vec::with_capacity(rows.len());
        for (m, v) in rows {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            data.extend_from_slice(v.as_slice());
            meta.push(m);
        }
        Ok(PrototypeSpace { dim, data, meta })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn meta(&self) -> &[AliasMeta] {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn candidate(&self, row: usize, score: f64) -> Candidate {
        let m = &self.meta[row];
        Candidate {
            cui: m.cui.clone(),
            alias: m.alias.clone(),
            score,
        }
    }

    fn row_order(&self, a: &(usize, f64), b: &(usize, f64)) -> Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.meta[a.0].cui.cmp(&self.meta[b.0].cui))
            .then_with(|| self.meta[a.0].alias.cmp(&self.meta[b.0].alias))
    }

    fn top_k_rows(&self, query: &[f32], rows: std::ops::Range<usize>, k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = rows
            .map(|i| (i, encoding::dot(query, self.row(i))))
            .collect();
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, |a, b| self.row_order(a, b));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| self.row_order(a, b));
        scored
    }

    /// Exact top-`k` alias rows by cosine. Large spaces are scanned in
    /// parallel partitions whose partial results are merged under the same
    /// total order, so the output does not depend on the thread count.
    pub fn search(&self, query: &Vector, k: usize, query_id: &str) -> Result<CandidateSet> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if self.is_empty() {
            return Err(Error::EmptySpace);
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        let q = query.as_slice();
        let n = self.len();
        let top = if n <= PARTITION_ROWS {
            self.top_k_rows(q, 0..n, k)
        } else {
            let parts: Vec<Vec<(usize, f64)>> = (0..n.div_ceil(PARTITION_ROWS))
                .into_par_iter()
                .map(|p| {
                    let lo = p * PARTITION_ROWS;
                    self.top_k_rows(q, lo..(lo + PARTITION_ROWS).min(n), k)
                })
                .collect();
            let mut merged: Vec<(usize, f64)> = parts.into_iter().flatten().collect();
            merged.sort_by(|a, b| self.row_order(a, b));
            merged.truncate(k);
            merged
        };
        Ok(CandidateSet {
            query_id: query_id.to_owned(),
            candidates: top.into_iter().map(|(i, s)| self.candidate(i, s)).collect(),
        })
    }

    /// Searches many queries concurrently; output order follows input order.
    pub fn search_batch(&self, queries: &[(String, Vector)], k: usize) -> Result<Vec<CandidateSet>> {
        queries
            .par_iter()
            .map(|(id, q)| self.search(q, k, id))
            .collect()
    }

    /// Writes `<stem>.prot` and `<stem>.meta.jsonl`.
    pub fn save(&self, prot_path: &Path, meta_path: &Path) -> Result<()> {
        let mut store = EmbeddingStore::new(self.dim)?;
        for (i, m) in self.meta.iter().enumerate() {
            store.push(m.embedding_id(), self.row(i).to_vec())?;
        }
        encoding::write_embeddings(&store, prot_path)?;
        let f = File::create(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let mut w = BufWriter::new(f);
        for m in &self.meta {
            let line = serde_json::to_string(m).expect("alias meta serialises");
            writeln!(w, "{line}").map_err(|e| Error::io(meta_path, e))?;
        }
        w.flush().map_err(|e| Error::io(meta_path, e))
    }

    pub fn load(prot_path: &Path, meta_path: &Path) -> Result<Self> {
        let store = encoding::load_embeddings(prot_path)?;
        let f = File::open(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let mut meta = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(meta_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let m: AliasMeta = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                file: meta_path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            meta.push(m);
        }
        let mut data = Vec::with_capacity(meta.len() * store.dim());
        for m in &meta {
            let id = m.embedding_id();
            let v = store.get(&id).ok_or(Error::MissingEmbedding(id))?;
            data.extend_from_slice(v.as_slice());
        }
        if meta.len() != store.len() {
            return Err(Error::Truncated {
                format: "PROT",
                detail: format!("{} vectors but {} alias records", store.len(), meta.len()),
            });
        }
        Ok(PrototypeSpace {
            dim: store.dim(),
            data,
            meta,
        })
    }
}

/// First occurrence of each cui, in candidate order, truncated to `n`
/// entities.
pub fn dedup_entities(cands: &CandidateSet, n: usize) -> Vec<(String, f64)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in &cands.candidates {
        if out.len() == n {
            break;
        }
        if seen.insert(c.cui.as_str()) {
            out.push((c.cui.clone(), c.score));
        }
    }
    out
}
