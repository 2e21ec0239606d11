use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spacing {0:?}: all components must be finite and > 0")]
    InvalidSpacing([f64; 3]),

    #[error("data length {actual} does not match dims {dims:?} ({expected} voxels)")]
    DataLength {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),

    #[error("spacing mismatch: {0:?} vs {1:?}")]
    SpacingMismatch([f64; 3], [f64; 3]),

    #[error("invalid axis {0}, expected 0, 1 or 2")]
    InvalidAxis(usize),

    #[error("invalid normalization scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid class table: {0}")]
    InvalidClassTable(String),

    #[error("label {0} is not in the class table")]
    UnknownLabel(u32),

    #[error("empty mask: distance transform needs at least one foreground voxel")]
    EmptyMask,

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("invalid NIfTI file: {0}")]
    InvalidNifti(String),

    #[error("label {0} does not fit the on-disk label width (max 65535)")]
    LabelOverflow(u32),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid cutoff table: {0}")]
    InvalidCutoffs(String),

    #[error("invalid ranking input: {0}")]
    InvalidRanking(String),

    #[error("invalid ensemble input: {0}")]
    InvalidEnsemble(String),

    #[error("invalid plan request: {0}")]
    InvalidPlan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the content
    /// of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
