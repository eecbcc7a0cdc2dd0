use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while loading inputs, building the space,
/// linking or evaluating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate cui {0}")]
    DuplicateCui(String),

    #[error("merge cycle through {0}")]
    MergeCycle(String),

    #[error("merge target {target} of {source_cui} is missing or not active")]
    MergeTargetMissing { source_cui: String, target: String },

    #[error("unknown cui {0}")]
    UnknownCui(String),

    #[error("cui {0} does not resolve to an active entity")]
    InconsistentSnapshot(String),

    #[error("entity {0} has no semantic types")]
    MissingTypes(String),

    #[error("empty text cannot be encoded")]
    EmptyText,

    #[error("invalid dimension {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bad magic in {format} file: {found:?}")]
    BadMagic { format: &'static str, found: [u8; 4] },

    #[error("unsupported {format} version {version}")]
    BadVersion { format: &'static str, version: u8 },

    #[error("truncated {format} file: {detail}")]
    Truncated { format: &'static str, detail: String },

    #[error("duplicate embedding id {0}")]
    DuplicateId(String),

    #[error("zero-norm vector for id {0}")]
    ZeroNorm(String),

    #[error("missing embedding for id {0}")]
    MissingEmbedding(String),

    #[error("prototype space is empty")]
    EmptySpace,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid span {start}..={end} for sequence of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("mention sets differ between runs: {0}")]
    MismatchedMentions(String),

    #[error("overlapping mention spans in article {0}")]
    OverlappingSpans(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Input and configuration problems map to exit code 2, everything else
    /// to exit code 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::MalformedRecord { .. }
            | Error::DuplicateCui(_)
            | Error::MergeCycle(_)
            | Error::MergeTargetMissing { .. }
            | Error::BadMagic { .. }
            | Error::BadVersion { .. }
            | Error::Truncated { .. }
            | Error::DuplicateId(_)
            | Error::ZeroNorm(_)
            | Error::MissingEmbedding(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidDimension(_)
            | Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
