//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("input vector contains a non-finite value")]
    NonFiniteInput,

    #[error("non-finite intermediate value produced by layer {layer}")]
    NonFiniteIntermediate { layer: usize },

    #[error("operation requires a {expected} model")]
    TaskMismatch { expected: &'static str },

    /// Structural model problems; `layer` names the offending layer when one exists.
    #[error("invalid model{}: {message}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    InvalidModel {
        layer: Option<usize>,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dataset parse error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("label {label} of input {index} outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("probability {0} outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("invalid output bounds: min {min} is not below max {max}")]
    InvalidBounds { min: f64, max: f64 },

    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("empty ordering")]
    EmptyOrdering,

    #[error("rank {rank} outside [1, {methods}]")]
    RankOutOfRange { rank: usize, methods: usize },

    #[error("probability vector is not normalized")]
    NotNormalized,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
