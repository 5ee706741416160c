use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported {format} version {version} in {path}")]
    UnsupportedVersion {
        path: PathBuf,
        format: &'static str,
        version: u32,
    },

    #[error("dtype mismatch in {path}: {detail}")]
    DtypeMismatch { path: PathBuf, detail: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("checksum mismatch in {path}: header {expected:#018x}, payload {actual:#018x}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("sample count mismatch: x has {x} samples, y has {y}")]
    CountMismatch { x: usize, y: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has {available} samples, {required} required")]
    ClassTooSmall {
        class: u32,
        available: usize,
        required: usize,
    },

    #[error("subsample would be empty")]
    EmptyResult,

    #[error("duplicate sample id {0}")]
    DuplicateId(u64),

    #[error("views share no sample ids")]
    EmptyIntersection,

    #[error("covariance is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("oracle size guard exceeded: d_x * d_y = {0} > 10000")]
    SizeGuard(usize),

    #[error("train/val leakage: {0}")]
    Leakage(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    Training {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("method {method}, seed {seed}: {source}")]
    Cell {
        method: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for this error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. } => "bad-magic",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::DtypeMismatch { .. } => "dtype-mismatch",
            Error::Truncated { .. } => "truncated",
            Error::ChecksumMismatch { .. } => "checksum-mismatch",
            Error::NonFinite { .. } => "non-finite",
            Error::DimMismatch { .. } => "dim-mismatch",
            Error::CountMismatch { .. } => "count-mismatch",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::ClassTooSmall { .. } => "class-too-small",
            Error::EmptyResult => "empty-result",
            Error::DuplicateId(_) => "duplicate-id",
            Error::EmptyIntersection => "empty-intersection",
            Error::NotSymmetric { .. } => "not-symmetric",
            Error::Decomposition(_) => "decomposition",
            Error::SizeGuard(_) => "size-guard",
            Error::Leakage(_) => "leakage",
            Error::Manifest(_) => "manifest",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Training { .. } => "training",
            Error::Cell { source, .. } => source.kind(),
        }
    }

    /// Errors caused by a failure inside the library rather than by bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Decomposition(_) | Error::Training { .. } | Error::Leakage(_) => true,
            Error::Cell { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}
