use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variant names are stable: the CLI serializes them as the `error` field of
/// its structured failure payload.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node id {id} out of range for a hypergraph with {n} nodes (edge {edge})")]
    NodeIdOutOfRange { id: usize, n: usize, edge: usize },
    #[error("hyperedge {edge} is empty")]
    EmptyEdge { edge: usize },
    #[error("hyperedge {edge} has non-positive weight {weight}")]
    NonpositiveWeight { edge: usize, weight: f64 },
    #[error("weights length {got} does not match edge count {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error("hypergraph is not {d}-uniform (edge {edge} has {size} nodes)")]
    NotUniform { d: usize, edge: usize, size: usize },
    #[error("dense tensor with {entries} entries exceeds the limit of {limit}")]
    TooLarge { entries: u128, limit: u128 },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("output of shape {rows}x{cols} is not a scalar")]
    NonScalarOutput { rows: usize, cols: usize },
    #[error("input must be strictly positive, found {value} at ({row}, {col})")]
    NonPositiveInput { row: usize, col: usize, value: f64 },
    #[error("zero normalizer for {what} {index}")]
    ZeroNormalizer { what: &'static str, index: usize },
    #[error("hyperedge {edge} has {size} nodes; at least 2 are required")]
    DegenerateEdge { edge: usize, size: usize },
    #[error("power mean of a negative value {value} at ({row}, {col})")]
    NegativeBase { row: usize, col: usize, value: f64 },
    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("multiset is empty")]
    EmptyMultiset,
    #[error("need at least {min} nodes to split, got {n}")]
    TooFewNodes { n: usize, min: usize },
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("need at least {min} runs, got {got}")]
    TooFewRuns { got: usize, min: usize },
    #[error("{classes} classes do not fit in {dim} feature dimensions")]
    TooManyClasses { classes: usize, dim: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}:{line}: label {label} is outside [0, {classes})")]
    LabelOutOfRange {
        path: String,
        line: usize,
        label: usize,
        classes: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("per-aggregator layer would materialize {states} hidden states (limit {limit})")]
    InstanceTooLarge { states: usize, limit: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short variant name used in machine-readable error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NodeIdOutOfRange { .. } => "NodeIdOutOfRange",
            Error::EmptyEdge { .. } => "EmptyEdge",
            Error::NonpositiveWeight { .. } => "NonpositiveWeight",
            Error::WeightCount { .. } => "WeightCount",
            Error::NotUniform { .. } => "NotUniform",
            Error::TooLarge { .. } => "TooLarge",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::EmptyMask => "EmptyMask",
            Error::NonScalarOutput { .. } => "NonScalarOutput",
            Error::NonPositiveInput { .. } => "NonPositiveInput",
            Error::ZeroNormalizer { .. } => "ZeroNormalizer",
            Error::DegenerateEdge { .. } => "DegenerateEdge",
            Error::NegativeBase { .. } => "NegativeBase",
            Error::ZeroNormRow { .. } => "ZeroNormRow",
            Error::EmptyMultiset => "EmptyMultiset",
            Error::TooFewNodes { .. } => "TooFewNodes",
            Error::Divergence { .. } => "Divergence",
            Error::TooFewRuns { .. } => "TooFewRuns",
            Error::TooManyClasses { .. } => "TooManyClasses",
            // Missing or unreadable input files are reported as parse failures.
            Error::Parse { .. } | Error::Io { .. } | Error::Json(_) => "ParseError",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InstanceTooLarge { .. } => "InstanceTooLarge",
        }
    }

    /// Whether the failure was caused by bad user input rather than a bug or
    /// a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
