//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! paths.ontology = fixtures/ontology.jsonl
//! k = 128
//! grid.a = 1, 2, 5
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rerank::{Grid, RerankParams};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            values.insert(key.to_owned(), value.trim().to_owned());
        }
        Ok(Config {
            values,
            base_dir: base_dir.to_owned(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.values.insert(k.trim().to_owned(), v.trim().to_owned());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankMode {
    None,
    Parametric,
    Type,
    Group,
}

impl FromStr for RerankMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RerankMode::None),
            "parametric" => Ok(RerankMode::Parametric),
            "type" => Ok(RerankMode::Type),
            "group" => Ok(RerankMode::Group),
            _ => Err(Error::Config(format!("unknown rerank mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    None,
    Neighboring,
    Attention,
    Implicit,
}

impl FromStr for ContextMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContextMode::None),
            "nc" => Ok(ContextMode::Neighboring),
            "ac" => Ok(ContextMode::Attention),
            "ic" => Ok(ContextMode::Implicit),
            _ => Err(Error::Config(format!("unknown context mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub ontology: PathBuf,
    pub relations: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub semantic_embeddings: Option<PathBuf>,
    pub doc_embeddings: Option<PathBuf>,
    pub token_encodings: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub paths: Paths,
    pub encoder_dim: usize,
    /// Alias-level candidates retrieved per mention.
    pub k: usize,
    pub rerank_mode: RerankMode,
    /// Alias-level candidates handed to the reranker.
    pub rerank_k: usize,
    pub params: RerankParams,
    pub run_grid: bool,
    pub grid: Grid,
    pub context_mode: ContextMode,
    pub context_window: usize,
    pub gold_replace_all: bool,
    pub r_at: Vec<usize>,
    pub sweep_k: Vec<usize>,
}

impl RunConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let required = |key: &str| {
            cfg.path(key)
                .ok_or_else(|| Error::Config(format!("missing required key {key}")))
        };
        let paths = Paths {
            ontology: required("paths.ontology")?,
            relations: cfg.path("paths.relations"),
            corpus: cfg.path("paths.corpus"),
            embeddings: cfg.path("paths.embeddings"),
            semantic_embeddings: cfg.path("paths.semantic_embeddings"),
            doc_embeddings: cfg.path("paths.doc_embeddings"),
            token_encodings: cfg.path("paths.token_encodings"),
            attention: cfg.path("paths.attention"),
            stopwords: cfg.path("context.stopwords").or_else(|| cfg.path("paths.stopwords")),
            abbreviations: cfg.path("paths.abbreviations"),
            output: required("paths.output")?,
        };
        let defaults = Grid::default();
        let grid = Grid {
            a: cfg.list("grid.a")?.unwrap_or(defaults.a),
            b: cfg.list("grid.b")?.unwrap_or(defaults.b),
            c: cfg.list("grid.c")?.unwrap_or(defaults.c),
        };
        let d = RerankParams::default();
        let params = RerankParams::new(
            cfg.parsed("rerank.a", d.a)?,
            cfg.parsed("rerank.b", d.b)?,
            cfg.parsed("rerank.c", d.c)?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let run = RunConfig {
            paths,
            encoder_dim: cfg.parsed("encoder.dim", crate::encoding::REFERENCE_DIM)?,
            k: cfg.parsed("k", 128)?,
            rerank_mode: cfg.parsed("rerank.mode", RerankMode::None)?,
            rerank_k: cfg.parsed("rerank.k", 10)?,
            params,
            run_grid: cfg.parsed("rerank.grid", false)?,
            grid,
            context_mode: cfg.parsed("context.mode", ContextMode::None)?,
            context_window: cfg.parsed("context.window", crate::context::DEFAULT_WINDOW)?,
            gold_replace_all: cfg.parsed("eval.ag_replace_all", false)?,
            r_at: cfg.list("eval.r_at")?.unwrap_or_else(|| vec![1, 5, 10, 128]),
            sweep_k: cfg
                .list("eval.sweep_k")?
                .unwrap_or_else(|| vec![1, 2, 3, 5, 10, 15, 20, 32, 64, 128]),
        };
        if run.k == 0 || run.rerank_k == 0 {
            return Err(Error::Config("k and rerank.k must be at least 1".into()));
        }
        if run.encoder_dim < 2 {
            return Err(Error::Config("encoder.dim must be at least 2".into()));
        }
        if run.r_at.iter().chain(&run.sweep_k).any(|&n| n == 0) {
            return Err(Error::Config("eval.r_at and eval.sweep_k entries must be positive".into()));
        }
        Ok(run)
    }

    /// Every configured input must exist before a command starts.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let inputs = std::iter::once(&p.ontology).chain(
            [
                &p.relations,
                &p.corpus,
                &p.embeddings,
                &p.semantic_embeddings,
                &p.doc_embeddings,
                &p.token_encodings,
                &p.attention,
                &p.stopwords,
                &p.abbreviations,
            ]
            .into_iter()
            .flatten(),
        );
        for path in inputs {
            if !path.exists() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "configured input does not exist"),
                ));
            }
        }
        Ok(())
    }
}
