//! Crate-wide error type.

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} for {dim} is outside the {range} range")]
    OutOfRange {
        dim: String,
        value: f64,
        range: String,
    },
    #[error("class {index} ({name}) has zero count; weights are undefined")]
    DegenerateClass { index: usize, name: String },
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: String, details: String },
    #[error("label index {index} out of range for {num_classes} classes")]
    Label { index: usize, num_classes: usize },
    #[error("invalid label data: {0}")]
    LabelData(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unknown label space '{0}'")]
    UnknownSpace(String),
    #[error("unknown category '{name}' in space '{space}'")]
    UnknownCategory { name: String, space: String },
    #[error("unknown continuous dimension '{0}'")]
    UnknownDim(String),
    #[error("operation requires a {required} space but '{space}' is {actual}")]
    UnsupportedSpace {
        space: String,
        required: String,
        actual: String,
    },
    #[error("label spaces are incompatible: {0}")]
    SpaceMismatch(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schedule error: step {step} exceeds total_steps {total_steps}")]
    Schedule { step: u64, total_steps: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("validation failed for {count} record(s):\n{details}")]
    Validation { count: usize, details: String },
    #[error("synthetic spec error: {0}")]
    SyntheticSpec(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training aborted: {0}")]
    TrainAbort(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for CLI error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "out_of_range",
            Error::DegenerateClass { .. } => "degenerate_class",
            Error::Shape { .. } => "shape",
            Error::Label { .. } => "label",
            Error::LabelData(_) => "label_data",
            Error::NonFinite { .. } => "non_finite",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::UnknownSpace(_) => "unknown_space",
            Error::UnknownCategory { .. } => "unknown_category",
            Error::UnknownDim(_) => "unknown_dim",
            Error::UnsupportedSpace { .. } => "unsupported_space",
            Error::SpaceMismatch(_) => "space_mismatch",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Schedule { .. } => "schedule",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::SyntheticSpec(_) => "synthetic_spec",
            Error::Checkpoint(_) => "checkpoint",
            Error::TrainAbort(_) => "train_abort",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
