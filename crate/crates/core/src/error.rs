use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, estimators and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probabilities sum to {sum}, outside the accepted tolerance of 1e-3")]
    NotNormalized { sum: f64 },

    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid system dimensions: {0}")]
    InvalidDims(String),

    #[error(
        "negative inverse temperature {beta} is only meaningful for two levels (got {levels})"
    )]
    NegativeBeta { beta: f64, levels: usize },

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: String,
        value: f64,
        range: &'static str,
    },

    #[error("channel is not a permutation")]
    NotPermutation,

    #[error("column {column} of the channel sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },

    #[error("subsystem selection must not be empty")]
    EmptySelection,

    #[error("branch probabilities are not normalized (sum = {sum})")]
    BranchNotNormalized { sum: f64 },

    #[error("line {line}: malformed label `{label}`")]
    MalformedLabel { line: usize, label: String },

    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: cannot parse `{token}` as a number")]
    BadNumber { line: usize, token: String },

    #[error("{what} `{label}` sums to {sum}, outside the accepted tolerance of 1e-3")]
    TableNormalization {
        what: &'static str,
        label: String,
        sum: f64,
    },

    #[error("value {value} for {label} lies outside [0, 1]")]
    TableValue { label: String, value: f64 },

    #[error("table is empty")]
    EmptyTable,

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no results to write")]
    EmptyResults,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error: 1 for usage and configuration
    /// problems, 2 for malformed data.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. }
            | Error::InvalidConfig(_)
            | Error::OutOfRange { .. }
            | Error::NegativeBeta { .. }
            | Error::InvalidDims(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
