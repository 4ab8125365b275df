use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while building, designing or evaluating an experiment.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node features are required but missing")]
    MissingFeatures,

    #[error("edge weights are required but missing")]
    MissingWeights,

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("incompatible scheme combination: {0}")]
    IncompatibleSchemes(String),

    #[error("{arm} arm is empty")]
    EmptyArm { arm: &'static str },

    #[error("graph has no edges")]
    NoEdges,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("brute-force matching supports at most {max} vertices, got {got}")]
    TooLarge { max: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingFeatures => "missing_features",
            Error::MissingWeights => "missing_weights",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::IncompatibleSchemes(_) => "incompatible_schemes",
            Error::EmptyArm { .. } => "empty_arm",
            Error::NoEdges => "no_edges",
            Error::EmptyInput(_) => "empty_input",
            Error::TooLarge { .. } => "too_large",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
