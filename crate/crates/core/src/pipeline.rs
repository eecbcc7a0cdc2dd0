//! Commands behind the `protolink` binary: build and persist the prototype
//! space, link a corpus, and evaluate the linked output.
//!
//! Every output except `manifest.json` is a pure function of the config and
//! its inputs; the manifest also records when it was written.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ContextMode, RerankMode, RunConfig};
use crate::context::{self, AttentionTensor, MentionSpan, SpanSidecar, Stopwords};
use crate::corpus::{AbbreviationMap, Article, Corpus};
use crate::encoding::{
    self, EmbeddingStore, ReferenceEncoder, StoreEncoder, TextEncoder, TokenEncodings, Vector,
};
use crate::error::{Error, Result};
use crate::eval::{self, Breakdown, EvalReport, MatchOutcome, MentionResult, TransitionMatrix};
use crate::index::{self, AliasSelection, Candidate, CandidateSet, EmbeddingSource, PrototypeSpace};
use crate::ontology::OntologySnapshot;
use crate::rerank::{self, GridSearchResult, RerankParams, RerankedCandidate, SemanticEncodings};
use crate::synthetic::SyntheticProvider;

pub const SPACE_FILE: &str = "space.prot";
pub const META_FILE: &str = "space.meta.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TRANSITION_CSV: &str = "transition.csv";
pub const ARTICLE_SIM_CSV: &str = "article_similarity.csv";
pub const TOPK_CSV: &str = "topk_sweep.csv";
pub const WORDCOUNT_CSV: &str = "wordcount.csv";
pub const GRID_CSV: &str = "grid.csv";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub created_unix: u64,
    pub rows: usize,
    pub entities: usize,
    pub dim: usize,
    /// `reference` or `store`.
    pub source: String,
    /// Content hashes of the inputs, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// Content hashes of the written files, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialise");
    text.push('\n');
    write_text(path, &text)
}

fn output_dir(run: &RunConfig) -> Result<&Path> {
    let dir = run.paths.output.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

/// Loaded inputs and the prototype space for one run.
pub struct Session {
    pub run: RunConfig,
    pub snapshot: OntologySnapshot,
    store: Option<EmbeddingStore>,
    reference: ReferenceEncoder,
    pub space: PrototypeSpace,
}

impl Session {
    /// Loads the ontology and embeddings and builds the prototype space the
    /// context mode calls for, reusing a cached space in the output
    /// directory when its recorded input hashes still match.
    pub fn open(run: RunConfig) -> Result<Self> {
        run.check_inputs()?;
        let snapshot = OntologySnapshot::load(&run.paths.ontology, run.paths.relations.as_deref())?;
        info!(
            "ontology: {} active entities, {} aliases, {} merged, {} excluded",
            snapshot.active_count(),
            snapshot.alias_count(),
            snapshot.merge_map().len(),
            snapshot.excluded().len()
        );
        let store = match &run.paths.embeddings {
            Some(p) => {
                let s = encoding::load_embeddings(p)?;
                for w in s.warnings() {
                    warn!("{w}");
                }
                Some(s)
            }
            None => None,
        };
        let reference = ReferenceEncoder {
            dim: run.encoder_dim,
        };
        let selection = match run.context_mode {
            ContextMode::Implicit => AliasSelection::CanonicalOnly,
            _ => AliasSelection::All,
        };
        let cached = if selection == AliasSelection::All {
            Self::cached_space(&run)?
        } else {
            None
        };
        let space = match cached {
            Some(space) => space,
            None => {
                let source = match &store {
                    Some(s) => EmbeddingSource::Store(s),
                    None => EmbeddingSource::Encoder(&reference),
                };
                PrototypeSpace::build(&snapshot, source, selection)?
            }
        };
        info!("prototype space: {} rows, dim {}", space.len(), space.dim());
        Ok(Session {
            run,
            snapshot,
            store,
            reference,
            space,
        })
    }

    fn input_hashes(run: &RunConfig) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        inputs.insert("ontology".to_owned(), sha256_file(&run.paths.ontology)?);
        match &run.paths.embeddings {
            Some(p) => {
                inputs.insert("embeddings".to_owned(), sha256_file(p)?);
            }
            None => {
                inputs.insert("encoder".to_owned(), format!("reference/{}", run.encoder_dim));
            }
        }
        Ok(inputs)
    }

    fn cached_space(run: &RunConfig) -> Result<Option<PrototypeSpace>> {
        let dir = &run.paths.output;
        let manifest_path = dir.join(MANIFEST_FILE);
        let Ok(text) = fs::read_to_string(&manifest_path) else {
            return Ok(None);
        };
        let Ok(manifest) = serde_json::from_str::<Manifest>(&text) else {
            warn!("ignoring unreadable {}", manifest_path.display());
            return Ok(None);
        };
        if manifest.inputs != Self::input_hashes(run)? {
            info!("cached space is stale, rebuilding");
            return Ok(None);
        }
        info!("loading cached space from {}", dir.display());
        PrototypeSpace::load(&dir.join(SPACE_FILE), &dir.join(META_FILE)).map(Some)
    }

    fn query_encoder(&self) -> Box<dyn TextEncoder + '_> {
        match &self.store {
            Some(store) => Box::new(StoreEncoder { store }),
            None => Box::new(self.reference),
        }
    }

    fn side_encoder(&self, path: &Option<PathBuf>) -> Result<Box<dyn TextEncoder>> {
        match path {
            Some(p) => Ok(Box::new(OwnedStoreEncoder(encoding::load_embeddings(p)?))),
            None => Ok(Box::new(self.reference)),
        }
    }
}

/// Looks texts up in an owned store keyed by the texts themselves.
struct OwnedStoreEncoder(EmbeddingStore);

impl TextEncoder for OwnedStoreEncoder {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn encode(&self, text: &str) -> Result<Vector> {
        StoreEncoder { store: &self.0 }.encode(text)
    }
}

/// Writes the prototype space cache and its manifest.
pub fn cmd_build_index(run: &RunConfig) -> Result<Manifest> {
    // a cached space must never be the source of a fresh build
    let mut fresh = run.clone();
    fresh.context_mode = ContextMode::None;
    let dir = output_dir(run)?.to_owned();
    let _ = fs::remove_file(dir.join(MANIFEST_FILE));
    let session = Session::open(fresh)?;
    let prot = dir.join(SPACE_FILE);
    let meta = dir.join(META_FILE);
    session.space.save(&prot, &meta)?;
    let mut outputs = BTreeMap::new();
    outputs.insert(SPACE_FILE.to_owned(), sha256_file(&prot)?);
    outputs.insert(META_FILE.to_owned(), sha256_file(&meta)?);
    let created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        created_unix,
        rows: session.space.len(),
        entities: session.snapshot.active_count(),
        dim: session.space.dim(),
        source: if session.store.is_some() { "store" } else { "reference" }.to_owned(),
        inputs: Session::input_hashes(run)?,
        outputs,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// One corpus mention turned into a search query.
#[derive(Debug, Clone)]
pub struct Query {
    pub mention: MentionSpan,
    /// Gold cui resolved to an active entity.
    pub gold: String,
    /// Text the query vector was computed from; for implicit context this is
    /// the expanded surface and the vector comes from token encodings.
    pub text: String,
    pub vector: Vector,
}

struct ArticleTokenData {
    tokens: Vec<String>,
    encodings: TokenEncodings,
    attention: Option<AttentionTensor>,
    spans: Vec<(usize, usize)>,
}

impl Session {
    fn load_corpus(&self) -> Result<Corpus> {
        let path = self
            .run
            .paths
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Config("paths.corpus is required for this command".into()))?;
        let corpus = Corpus::load(path)?;
        info!(
            "corpus: {} articles, {} mentions",
            corpus.articles.len(),
            corpus.mention_count()
        );
        Ok(corpus)
    }

    fn token_data(&self, article: &Article, need_attention: bool) -> Result<ArticleTokenData> {
        let paths = &self.run.paths;
        let from_files = paths.token_encodings.is_some() && (!need_attention || paths.attention.is_some());
        if !from_files {
            let out = SyntheticProvider {
                dim: self.run.encoder_dim,
                ..SyntheticProvider::default()
            }
            .article(&article.text, &article.mentions)?;
            return Ok(ArticleTokenData {
                tokens: out.tokens,
                encodings: out.encodings,
                attention: Some(out.attention),
                spans: out.spans,
            });
        }
        let toke_dir = paths.token_encodings.as_ref().expect("checked above");
        let encodings = TokenEncodings::load(&toke_dir.join(format!("{}.toke", article.id)))?;
        let sidecar = SpanSidecar::load(&toke_dir.join(format!("{}.spans.json", article.id)))?;
        if sidecar.spans.len() != article.mentions.len() {
            return Err(Error::MismatchedMentions(format!(
                "{} has {} mentions but {} token spans",
                article.id,
                article.mentions.len(),
                sidecar.spans.len()
            )));
        }
        let attention = match (&paths.attention, need_attention) {
            (Some(dir), true) => Some(AttentionTensor::load(&dir.join(format!("{}.attn", article.id)))?),
            _ => None,
        };
        Ok(ArticleTokenData {
            tokens: encodings.tokens().to_vec(),
            encodings,
            attention,
            spans: sidecar.spans,
        })
    }

    /// Builds one query per mention whose gold entity resolves to an active
    /// entity. Mentions of deleted or unknown entities are skipped and
    /// counted.
    pub fn build_queries(&self, corpus: &Corpus) -> Result<(Vec<Query>, usize)> {
        let abbreviations = match &self.run.paths.abbreviations {
            Some(p) => AbbreviationMap::load(p)?,
            None => AbbreviationMap::default(),
        };
        let stopwords = match &self.run.paths.stopwords {
            Some(p) => Stopwords::load(p)?,
            None => Stopwords::english(),
        };
        let encoder = self.query_encoder();
        let mode = self.run.context_mode;
        let per_article = corpus
            .articles
            .par_iter()
            .map(|article| -> Result<(Vec<Query>, usize)> {
                let tokens = match mode {
                    ContextMode::Attention => Some(self.token_data(article, true)?),
                    ContextMode::Implicit => Some(self.token_data(article, false)?),
                    _ => None,
                };
                let mut queries = Vec::with_capacity(article.mentions.len());
                let mut skipped = 0;
                for (i, m) in article.mentions.iter().enumerate() {
                    let Ok(gold) = self.snapshot.resolve_cui(&m.gold_cui) else {
                        skipped += 1;
                        continue;
                    };
                    let surface = abbreviations.expand(&article.id, &m.surface);
                    let mut mention = m.clone();
                    let (text, vector) = match (mode, &tokens) {
                        (ContextMode::None, _) => {
                            let v = encoder.encode(&surface);
                            (surface, v)
                        }
                        (ContextMode::Neighboring, _) => {
                            let t = context::surround(
                                &article.text,
                                m.start,
                                m.end,
                                &surface,
                                self.run.context_window,
                            );
                            let v = encoder.encode(&t);
                            (t, v)
                        }
                        (ContextMode::Attention, Some(td)) => {
                            let span = td.spans[i];
                            mention.token_range = Some(span);
                            let attn = td.attention.as_ref().expect("attention requested");
                            let t = context::attention_enrich(attn, &td.tokens, span, &surface, &stopwords)?;
                            let v = encoder.encode(&t);
                            (t, v)
                        }
                        (ContextMode::Implicit, Some(td)) => {
                            let span = td.spans[i];
                            mention.token_range = Some(span);
                            (surface, context::implicit_query(&td.encodings, span))
                        }
                        _ => unreachable!("token data is loaded for token-level modes"),
                    };
                    let vector = match vector {
                        Ok(v) => v,
                        Err(Error::ZeroNorm(_)) => {
                            warn!("query {text:?} of {} encodes to a zero vector, skipped", query_id(m));
                            skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    queries.push(Query {
                        mention,
                        gold,
                        text,
                        vector,
                    });
                }
                Ok((queries, skipped))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut queries = Vec::new();
        let mut skipped = 0;
        for (q, s) in per_article {
            queries.extend(q);
            skipped += s;
        }
        if skipped > 0 {
            warn!("skipped {skipped} mentions whose gold entity is not active");
        }
        Ok((queries, skipped))
    }
}

fn query_id(m: &MentionSpan) -> String {
    format!("{}:{}-{}", m.article_id, m.start, m.end)
}

/// Linking output for one mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedMention {
    pub article_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub query: String,
    pub gold: String,
    pub candidates: Vec<Candidate>,
    /// Reranked head of `candidates`, when a rerank mode is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranked: Option<Vec<RerankedCandidate>>,
}

impl LinkedMention {
    fn candidate_set(&self) -> CandidateSet {
        CandidateSet {
            query_id: format!("{}:{}-{}", self.article_id, self.start, self.end),
            candidates: self.candidates.clone(),
        }
    }

    /// Unique entities of the baseline candidates.
    pub fn baseline_result(&self) -> MentionResult {
        self.result(entities(&self.candidates))
    }

    /// Unique entities of the reranked head followed by the remaining
    /// baseline candidates; the baseline when no rerank was applied.
    pub fn final_result(&self) -> MentionResult {
        let Some(head) = &self.reranked else {
            return self.baseline_result();
        };
        let mut seen = HashSet::new();
        let ordered = head
            .iter()
            .map(|c| c.cui.as_str())
            .chain(self.candidates.iter().skip(head.len()).map(|c| c.cui.as_str()))
            .filter(|c| seen.insert(*c))
            .map(str::to_owned)
            .collect();
        self.result(ordered)
    }

    fn result(&self, entities: Vec<String>) -> MentionResult {
        MentionResult {
            article_id: self.article_id.clone(),
            start: self.start,
            end: self.end,
            gold: self.gold.clone(),
            entities,
        }
    }
}

fn entities(cands: &[Candidate]) -> Vec<String> {
    let mut seen = HashSet::new();
    cands
        .iter()
        .filter(|c| seen.insert(c.cui.as_str()))
        .map(|c| c.cui.clone())
        .collect()
}

/// Alias-level search repeated with a growing `k` until `n` unique entities
/// are found or the space is exhausted.
pub fn search_entities(space: &PrototypeSpace, query: &Vector, n: usize, query_id: &str) -> Result<Vec<String>> {
    let mut k = n.max(1);
    loop {
        let cands = space.search(query, k.min(space.len()), query_id)?;
        let found = index::dedup_entities(&cands, n);
        if found.len() == n || k >= space.len() {
            return Ok(found.into_iter().map(|(c, _)| c).collect());
        }
        k *= 2;
    }
}

impl Session {
    fn rerank_one(
        &self,
        cands: &CandidateSet,
        gold: &str,
        mode: RerankMode,
        params: &RerankParams,
        semantic: Option<&SemanticEncodings<'_>>,
    ) -> Result<Option<Vec<RerankedCandidate>>> {
        let head = cands.truncated(self.run.rerank_k);
        if head.is_empty() {
            return Ok(None);
        }
        let gold_entity = self
            .snapshot
            .entity(gold)
            .ok_or_else(|| Error::UnknownCui(gold.to_owned()))?;
        let set = match mode {
            RerankMode::None => return Ok(None),
            RerankMode::Parametric => rerank::parametric_rerank(&head, params)?,
            RerankMode::Type => rerank::type_rerank(
                &head,
                &gold_entity.type_names,
                &self.snapshot,
                semantic.expect("semantic encodings built for type rerank"),
            )?,
            RerankMode::Group => rerank::group_rerank(
                &head,
                &gold_entity.group_name,
                &self.snapshot,
                semantic.expect("semantic encodings built for group rerank"),
            )?,
        };
        Ok(Some(set.candidates))
    }

    /// Searches every query and applies the configured rerank.
    pub fn link_queries(
        &self,
        queries: &[Query],
        mode: RerankMode,
        params: &RerankParams,
    ) -> Result<Vec<LinkedMention>> {
        let semantic_encoder = self.side_encoder(&self.run.paths.semantic_embeddings)?;
        let semantic = match mode {
            RerankMode::Type | RerankMode::Group => {
                Some(SemanticEncodings::build(&self.snapshot, semantic_encoder.as_ref())?)
            }
            _ => None,
        };
        queries
            .par_iter()
            .map(|q| {
                let cands = self.space.search(&q.vector, self.run.k, &query_id(&q.mention))?;
                let reranked = self.rerank_one(&cands, &q.gold, mode, params, semantic.as_ref())?;
                Ok(LinkedMention {
                    article_id: q.mention.article_id.clone(),
                    start: q.mention.start,
                    end: q.mention.end,
                    surface: q.mention.surface.clone(),
                    query: q.text.clone(),
                    gold: q.gold.clone(),
                    candidates: cands.candidates,
                    reranked,
                })
            })
            .collect()
    }
}

fn write_candidates(path: &Path, linked: &[LinkedMention]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for l in linked {
        let line = serde_json::to_string(l).expect("linked mention serialises");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Links every corpus mention and writes `candidates.jsonl`.
pub fn cmd_link(run: &RunConfig) -> Result<Vec<LinkedMention>> {
    let dir = output_dir(run)?.to_owned();
    let session = Session::open(run.clone())?;
    let corpus = session.load_corpus()?;
    let (queries, _) = session.build_queries(&corpus)?;
    let linked = session.link_queries(&queries, run.rerank_mode, &run.params)?;
    write_candidates(&dir.join(CANDIDATES_FILE), &linked)?;
    Ok(linked)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub r_at: BTreeMap<usize, f64>,
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopKPoint {
    pub k: usize,
    /// Gold among the first `k` alias candidates.
    pub alias_level: f64,
    /// Gold among the first `k` unique entities.
    pub entity_level: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub best: RerankParams,
    pub best_r1: f64,
    /// Best R@1 with `c` fixed to zero.
    pub best_without_c: (RerankParams, f64),
    /// Best R@1 with `b` fixed to zero.
    pub best_without_b: (RerankParams, f64),
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub mean: f64,
    pub std: f64,
    pub region_a: Vec<String>,
    pub region_b: Vec<String>,
    pub skipped_articles: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub mentions: usize,
    pub skipped_mentions: usize,
    pub articles: usize,
    pub k: usize,
    pub rerank_mode: String,
    pub context_mode: String,
    pub baseline: RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reranked: Option<RunSummary>,
    /// Recall with `k` counted in alias rows and in unique entities.
    pub recall_k_alias: f64,
    pub recall_k_entity: f64,
    pub transition: TransitionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridReport>,
    pub regions: RegionSummary,
    pub wordcount: BTreeMap<usize, eval::BucketRates>,
}

/// Everything `cmd_evaluate` computes, before it is written out.
pub struct Evaluation {
    pub report: Report,
    pub linked: Vec<LinkedMention>,
    pub topk: Vec<TopKPoint>,
    pub grid: Option<GridSearchResult>,
    pub similarity: Option<eval::RegionAnalysis>,
}

fn summary(report: &EvalReport) -> RunSummary {
    RunSummary {
        r_at: report.r_at.clone(),
        breakdown: report.breakdown,
    }
}

fn best_of(evals: &[(RerankParams, f64)], keep: impl Fn(&RerankParams) -> bool) -> Option<(RerankParams, f64)> {
    evals.iter().filter(|(p, _)| keep(p)).fold(None, |acc, &(p, r)| match acc {
        Some((_, best)) if r <= best => acc,
        _ => Some((p, r)),
    })
}

impl Session {
    fn grid_report(&self, linked: &[LinkedMention]) -> Result<(GridSearchResult, GridReport)> {
        let dev: Vec<rerank::DevExample> = linked
            .iter()
            .map(|l| (l.candidate_set().truncated(self.run.rerank_k), l.gold.clone()))
            .collect();
        let result = rerank::grid_search(&dev, &self.run.grid)?;
        // evaluations are in lexicographic order, so the first maximum is
        // the lexicographically smallest
        let without = |keep: &dyn Fn(&RerankParams) -> bool, what: &str| {
            best_of(&result.evaluations, keep).ok_or_else(|| {
                Error::InvalidParams(format!("grid has no valid point with {what} = 0"))
            })
        };
        let best_without_c = without(&|p| p.c == 0.0, "c")?;
        let best_without_b = without(&|p| p.b == 0.0, "b")?;
        let report = GridReport {
            best: result.best,
            best_r1: result.best_r1,
            best_without_c,
            best_without_b,
            points: result.evaluations.len(),
        };
        Ok((result, report))
    }

    fn topk_sweep(&self, linked: &[LinkedMention], queries: &[Query]) -> Result<(Vec<TopKPoint>, f64, f64)> {
        let max_k = self.run.sweep_k.iter().copied().chain([self.run.k]).max().unwrap_or(1);
        let entity_lists = queries
            .par_iter()
            .map(|q| search_entities(&self.space, &q.vector, max_k, &query_id(&q.mention)))
            .collect::<Result<Vec<_>>>()?;
        let entity_results: Vec<MentionResult> = linked
            .iter()
            .zip(entity_lists)
            .map(|(l, ents)| l.result(ents))
            .collect();
        let alias_recall = |k: usize| -> Result<f64> {
            let results: Vec<MentionResult> = linked
                .iter()
                .map(|l| l.result(entities(&l.candidates[..k.min(l.candidates.len())])))
                .collect();
            eval::recall_at(&results, usize::MAX)
        };
        let mut points = Vec::new();
        for &k in &self.run.sweep_k {
            if k > self.run.k {
                warn!("top-k sweep point {k} exceeds k = {}, alias level capped", self.run.k);
            }
            points.push(TopKPoint {
                k,
                alias_level: alias_recall(k)?,
                entity_level: eval::recall_at(&entity_results, k)?,
            });
        }
        Ok((
            points,
            alias_recall(self.run.k)?,
            eval::recall_at(&entity_results, self.run.k)?,
        ))
    }

    fn similarity(
        &self,
        corpus: &Corpus,
        outcomes: &[MatchOutcome],
        baseline_r1: Option<&BTreeMap<String, f64>>,
    ) -> Result<(Option<eval::RegionAnalysis>, Vec<String>)> {
        let doc_encoder = self.side_encoder(&self.run.paths.doc_embeddings)?;
        let evaluated: HashSet<(&str, usize, usize)> = outcomes
            .iter()
            .map(|o| (o.article_id.as_str(), o.start, o.end))
            .collect();
        let per_article = corpus
            .articles
            .par_iter()
            .map(|a| {
                let article = Article {
                    id: a.id.clone(),
                    text: a.text.clone(),
                    mentions: a
                        .mentions
                        .iter()
                        .filter(|m| evaluated.contains(&(a.id.as_str(), m.start, m.end)))
                        .cloned()
                        .collect(),
                };
                if article.mentions.is_empty() {
                    return Ok(None);
                }
                match eval::article_similarity(
                    &article,
                    outcomes,
                    &self.snapshot,
                    doc_encoder.as_ref(),
                    self.run.gold_replace_all,
                ) {
                    Ok(mut rec) => {
                        rec.r1_alt = baseline_r1.and_then(|m| m.get(&a.id).copied());
                        Ok(Some(Ok(rec)))
                    }
                    Err(Error::OverlappingSpans(id)) => Ok(Some(Err(id))),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut records = Vec::new();
        let mut skipped = Vec::new();
        for r in per_article.into_iter().flatten() {
            match r {
                Ok(rec) => records.push(rec),
                Err(id) => {
                    warn!("article {id} has overlapping mentions, skipped in similarity analysis");
                    skipped.push(id);
                }
            }
        }
        if records.is_empty() {
            return Ok((None, skipped));
        }
        Ok((Some(eval::select_regions(&records, eval::SMOOTHING_WINDOW)?), skipped))
    }

    /// Links the corpus and computes every metric of the evaluation report.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let corpus = self.load_corpus()?;
        let (queries, skipped_mentions) = self.build_queries(&corpus)?;
        if queries.is_empty() {
            return Err(Error::EmptyInput("corpus mentions with an active gold entity"));
        }
        let (grid, grid_report, params) = if self.run.run_grid {
            let linked = self.link_queries(&queries, RerankMode::None, &self.run.params)?;
            let (g, r) = self.grid_report(&linked)?;
            let best = g.best;
            (Some(g), Some(r), best)
        } else {
            (None, None, self.run.params)
        };
        let linked = self.link_queries(&queries, self.run.rerank_mode, &params)?;
        let base_results: Vec<MentionResult> = linked.iter().map(LinkedMention::baseline_result).collect();
        let (base_report, base_outcomes) = EvalReport::compute(&base_results, &self.run.r_at, &self.snapshot)?;
        let reranked = if self.run.rerank_mode == RerankMode::None {
            None
        } else {
            let results: Vec<MentionResult> = linked.iter().map(LinkedMention::final_result).collect();
            Some(EvalReport::compute(&results, &self.run.r_at, &self.snapshot)?)
        };
        let final_outcomes = reranked.as_ref().map(|r| &r.1).unwrap_or(&base_outcomes);
        let transition = eval::transition_heatmap(&base_outcomes, final_outcomes)?;
        let (topk, recall_k_alias, recall_k_entity) = self.topk_sweep(&linked, &queries)?;
        let (similarity, skipped_articles) = self.similarity(
            &corpus,
            final_outcomes,
            reranked.as_ref().map(|_| &base_report.per_article_r1),
        )?;
        let surfaces: Vec<&str> = linked.iter().map(|l| l.surface.as_str()).collect();
        let wordcount = eval::wordcount_buckets(final_outcomes, &surfaces, eval::MIN_BUCKET_SIZE)?;
        let regions = match &similarity {
            Some(s) => RegionSummary {
                mean: s.mean,
                std: s.std,
                region_a: region_ids(s, eval::Region::A),
                region_b: region_ids(s, eval::Region::B),
                skipped_articles,
            },
            None => RegionSummary {
                mean: 0.0,
                std: 0.0,
                region_a: Vec::new(),
                region_b: Vec::new(),
                skipped_articles,
            },
        };
        let report = Report {
            mentions: linked.len(),
            skipped_mentions,
            articles: corpus.articles.len(),
            k: self.run.k,
            rerank_mode: format!("{:?}", self.run.rerank_mode).to_lowercase(),
            context_mode: format!("{:?}", self.run.context_mode).to_lowercase(),
            baseline: summary(&base_report),
            reranked: reranked.as_ref().map(|r| summary(&r.0)),
            recall_k_alias,
            recall_k_entity,
            transition,
            grid: grid_report,
            regions,
            wordcount,
        };
        Ok(Evaluation {
            report,
            linked,
            topk,
            grid,
            similarity,
        })
    }
}

fn region_ids(s: &eval::RegionAnalysis, region: eval::Region) -> Vec<String> {
    s.records
        .iter()
        .filter(|r| r.region == Some(region))
        .map(|r| r.article_id.clone())
        .collect()
}

fn transition_csv(t: &TransitionMatrix) -> String {
    let mut out = String::from("from,to,count,row_percent\n");
    for (i, from) in eval::Outcome::ALL.iter().enumerate() {
        for (j, to) in eval::Outcome::ALL.iter().enumerate() {
            out.push_str(&format!("{from:?},{to:?},{},{}\n", t.counts[i][j], t.row_percent[i][j]));
        }
    }
    out
}

fn similarity_csv(s: &eval::RegionAnalysis) -> String {
    let mut out = String::from("rank,article_id,s_g,s_p,diff,r1,r1_baseline,region,smoothed_r1,smoothed_r1_baseline\n");
    for (i, r) in s.records.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            r.article_id,
            r.s_g,
            r.s_p,
            r.diff,
            r.r1,
            opt(r.r1_alt),
            r.region.map(|g| format!("{g:?}")).unwrap_or_default(),
            s.smoothed_r1[i],
            opt(s.smoothed_r1_alt.as_ref().map(|v| v[i])),
        ));
    }
    out
}

fn topk_csv(points: &[TopKPoint]) -> String {
    let mut out = String::from("k,alias_level,entity_level\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.k, p.alias_level, p.entity_level));
    }
    out
}

fn wordcount_csv(buckets: &BTreeMap<usize, eval::BucketRates>) -> String {
    let mut out = String::from("words,count,exact,related\n");
    for (w, b) in buckets {
        out.push_str(&format!("{w},{},{},{}\n", b.count, b.exact, b.related));
    }
    out
}

fn grid_csv(g: &GridSearchResult) -> String {
    let mut out = String::from("a,b,c,r1\n");
    for (p, r) in &g.evaluations {
        out.push_str(&format!("{},{},{},{r}\n", p.a, p.b, p.c));
    }
    out
}

/// Runs the evaluation and writes the report, candidates and CSV series.
pub fn cmd_evaluate(run: &RunConfig) -> Result<Evaluation> {
    let dir = output_dir(run)?.to_owned();
    let session = Session::open(run.clone())?;
    let ev = session.evaluate()?;
    write_candidates(&dir.join(CANDIDATES_FILE), &ev.linked)?;
    write_json(&dir.join(REPORT_FILE), &ev.report)?;
    write_text(&dir.join(TRANSITION_CSV), &transition_csv(&ev.report.transition))?;
    write_text(&dir.join(TOPK_CSV), &topk_csv(&ev.topk))?;
    write_text(&dir.join(WORDCOUNT_CSV), &wordcount_csv(&ev.report.wordcount))?;
    if let Some(s) = &ev.similarity {
        write_text(&dir.join(ARTICLE_SIM_CSV), &similarity_csv(s))?;
    }
    if let Some(g) = &ev.grid {
        write_text(&dir.join(GRID_CSV), &grid_csv(g))?;
    }
    Ok(ev)
}
