//! Offline biomedical entity linking over a prototype embedding space.
//!
//! Mentions are encoded, matched against every (entity, alias) embedding by
//! exact cosine search, optionally reranked, and scored with retrieval and
//! article-level similarity metrics.

mod binio;

pub mod config;
pub mod context;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod index;
pub mod ontology;
pub mod pipeline;
pub mod plots;
pub mod rerank;
pub mod synthetic;

pub use error::{Error, Result};
