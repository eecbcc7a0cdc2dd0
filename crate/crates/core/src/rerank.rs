//! Candidate disambiguation: parametric rescoring, semantic type and
//! semantic group rescoring, and the grid search over the parametric
//! coefficients.
//!
//! The parametric score of an alias candidate `v` for query `q` is
//!
//! ```text
//! adjusted(q, v) = a * cos(q, v) + b * mean_j cos(q, v_j) + c * n
//! ```
//!
//! where `v_1..v_n` are the aliases of `v`'s entity present in the candidate
//! set. The semantic variants add the cosine between the canonical-name
//! encodings of the mention's and the candidate's semantic types (best pair)
//! or semantic groups.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{TextEncoder, Vector};
use crate::error::{Error, Result};
use crate::index::{Candidate, CandidateSet};
use crate::ontology::OntologySnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RerankParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = RerankParams { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParams(format!(
                "coefficients must be finite and non-negative: {self:?}"
            )));
        }
        if all.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParams("a, b and c are all zero".into()));
        }
        Ok(())
    }

    fn lex_cmp(&self, other: &Self) -> Ordering {
        self.a
            .total_cmp(&other.a)
            .then(self.b.total_cmp(&other.b))
            .then(self.c.total_cmp(&other.c))
    }
}

impl Default for RerankParams {
    /// Coefficients that work well for an untuned sentence encoder.
    fn default() -> Self {
        RerankParams {
            a: 5.0,
            b: 0.1,
            c: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedCandidate {
    pub cui: String,
    pub alias: String,
    pub score: f64,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedSet {
    pub query_id: String,
    pub candidates: Vec<RerankedCandidate>,
}

/// Adjusted score descending. Exact ties on the adjusted score fall back to
/// the original score so that monotone rescalings never reorder candidates,
/// then to cui and alias.
fn reranked_order(x: &RerankedCandidate, y: &RerankedCandidate) -> Ordering {
    y.adjusted
        .total_cmp(&x.adjusted)
        .then_with(|| y.score.total_cmp(&x.score))
        .then_with(|| x.cui.cmp(&y.cui))
        .then_with(|| x.alias.cmp(&y.alias))
}

impl RerankedSet {
    fn from_scores(cands: &CandidateSet, adjusted: impl Fn(&Candidate) -> Result<f64>) -> Result<Self> {
        let mut out = cands
            .candidates
            .iter()
            .map(|c| {
                Ok(RerankedCandidate {
                    cui: c.cui.clone(),
                    alias: c.alias.clone(),
                    score: c.score,
                    adjusted: adjusted(c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(reranked_order);
        Ok(RerankedSet {
            query_id: cands.query_id.clone(),
            candidates: out,
        })
    }

    /// Reranked order as a plain candidate set scored by the adjusted score.
    pub fn to_candidate_set(&self) -> CandidateSet {
        CandidateSet {
            query_id: self.query_id.clone(),
            candidates: self
                .candidates
                .iter()
                .map(|c| Candidate {
                    cui: c.cui.clone(),
                    alias: c.alias.clone(),
                    score: c.adjusted,
                })
                .collect(),
        }
    }
}

pub fn parametric_rerank(cands: &CandidateSet, params: &RerankParams) -> Result<RerankedSet> {
    if cands.is_empty() {
        return Err(Error::EmptyInput("candidate set"));
    }
    params.validate()?;
    // per entity: (alias count within the set, summed cosine)
    let mut stats: HashMap<&str, (usize, f64)> = HashMap::new();
    for c in &cands.candidates {
        let e = stats.entry(c.cui.as_str()).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += c.score;
    }
    RerankedSet::from_scores(cands, |c| {
        let (n, sum) = stats[c.cui.as_str()];
        let n = n as f64;
        Ok(params.a * c.score + params.b * (sum / n) + params.c * n)
    })
}

/// Canonical-name encodings of semantic types and groups, computed once per
/// distinct name.
pub struct SemanticEncodings<'a> {
    encoder: &'a dyn TextEncoder,
    cache: HashMap<String, Vector>,
}

impl<'a> SemanticEncodings<'a> {
    /// Pre-encodes every type and group name used by active entities.
    pub fn build(snapshot: &OntologySnapshot, encoder: &'a dyn TextEncoder) -> Result<Self> {
        let mut names: Vec<&str> = Vec::new();
        for e in snapshot.active() {
            names.extend(e.type_names.iter().map(String::as_str));
            names.push(e.group_name.as_str());
        }
        names.sort_unstable();
        names.dedup();
        let cache = names
            .par_iter()
            .map(|n| encoder.encode(n).map(|v| (n.to_string(), v)))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(SemanticEncodings { encoder, cache })
    }

    pub fn encoding(&self, name: &str) -> Result<Vector> {
        match self.cache.get(name) {
            Some(v) => Ok(v.clone()),
            None => self.encoder.encode(name),
        }
    }

    fn similarity(&self, x: &str, y: &str) -> Result<f64> {
        if let (Some(a), Some(b)) = (self.cache.get(x), self.cache.get(y)) {
            return Ok(a.cosine(b));
        }
        Ok(self.encoding(x)?.cosine(&self.encoding(y)?))
    }
}

pub fn type_rerank(
    cands: &CandidateSet,
    mention_types: &[String],
    snapshot: &OntologySnapshot,
    semantic: &SemanticEncodings<'_>,
) -> Result<RerankedSet> {
    if cands.is_empty() {
        return Err(Error::EmptyInput("candidate set"));
    }
    if mention_types.is_empty() {
        return Err(Error::EmptyInput("mention semantic types"));
    }
    let mut per_entity: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &cands.candidates {
        if per_entity.contains_key(c.cui.as_str()) {
            continue;
        }
        let entity = snapshot
            .entity(&c.cui)
            .ok_or_else(|| Error::UnknownCui(c.cui.clone()))?;
        if entity.type_names.is_empty() {
            return Err(Error::MissingTypes(c.cui.clone()));
        }
        let mut best = f64::NEG_INFINITY;
        for mt in mention_types {
            for ct in &entity.type_names {
                best = best.max(semantic.similarity(mt, ct)?);
            }
        }
        per_entity.insert(c.cui.as_str(), best);
    }
    RerankedSet::from_scores(cands, |c| Ok(c.score + per_entity[c.cui.as_str()]))
}

pub fn group_rerank(
    cands: &CandidateSet,
    mention_group: &str,
    snapshot: &OntologySnapshot,
    semantic: &SemanticEncodings<'_>,
) -> Result<RerankedSet> {
    if cands.is_empty() {
        return Err(Error::EmptyInput("candidate set"));
    }
    let mut per_entity: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &cands.candidates {
        if per_entity.contains_key(c.cui.as_str()) {
            continue;
        }
        let entity = snapshot
            .entity(&c.cui)
            .ok_or_else(|| Error::UnknownCui(c.cui.clone()))?;
        per_entity.insert(c.cui.as_str(), semantic.similarity(mention_group, &entity.group_name)?);
    }
    RerankedSet::from_scores(cands, |c| Ok(c.score + per_entity[c.cui.as_str()]))
}

/// Candidate coefficient values for the grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            a: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            b: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5],
            c: vec![0.0, 0.01, 0.05, 0.1, 0.5],
        }
    }
}

impl Grid {
    /// Valid grid points in lexicographic order.
    pub fn points(&self) -> Vec<RerankParams> {
        let mut out = Vec::with_capacity(self.a.len() * self.b.len() * self.c.len());
        for &a in &self.a {
            for &b in &self.b {
                for &c in &self.c {
                    let p = RerankParams { a, b, c };
                    if p.validate().is_ok() {
                        out.push(p);
                    }
                }
            }
        }
        out.sort_by(|x, y| x.lex_cmp(y));
        out.dedup();
        out
    }
}

/// One labelled development example: alias-level candidates and gold cui
/// (already resolved to an active entity).
pub type DevExample = (CandidateSet, String);

/// R@1 after parametric reranking, measured on unique entities.
pub fn parametric_r1(dev_set: &[DevExample], params: &RerankParams) -> Result<f64> {
    if dev_set.is_empty() {
        return Err(Error::EmptyInput("development set"));
    }
    let mut hits = 0usize;
    for (cands, gold) in dev_set {
        if cands.is_empty() {
            continue;
        }
        let reranked = parametric_rerank(cands, params)?;
        if reranked.candidates[0].cui == *gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / dev_set.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSearchResult {
    pub best: RerankParams,
    pub best_r1: f64,
    /// Every evaluated point, in lexicographic order.
    pub evaluations: Vec<(RerankParams, f64)>,
}

/// Exhaustive search for the coefficients maximising R@1. Ties go to the
/// lexicographically smallest `(a, b, c)`.
pub fn grid_search(dev_set: &[DevExample], grid: &Grid) -> Result<GridSearchResult> {
    if dev_set.is_empty() {
        return Err(Error::EmptyInput("development set"));
    }
    if grid.a.is_empty() || grid.b.is_empty() || grid.c.is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidParams("grid has no valid point".into()));
    }
    let evaluations = points
        .par_iter()
        .map(|p| parametric_r1(dev_set, p).map(|r| (*p, r)))
        .collect::<Result<Vec<_>>>()?;
    let (best, best_r1) = evaluations
        .iter()
        .copied()
        .reduce(|acc, cur| {
            match cur.1.total_cmp(&acc.1) {
                Ordering::Greater => cur,
                Ordering::Equal if cur.0.lex_cmp(&acc.0) == Ordering::Less => cur,
                _ => acc,
            }
        })
        .expect("points is non-empty");
    Ok(GridSearchResult {
        best,
        best_r1,
        evaluations,
    })
}
