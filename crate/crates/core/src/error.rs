use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("k = {k} must be smaller than n = {n}")]
    DependencyCount { n: usize, k: usize },

    #[error("pattern `{pattern}` is not defined for n = {n}, k = {k}: {reason}")]
    UnsupportedPattern {
        pattern: &'static str,
        n: usize,
        k: usize,
        reason: &'static str,
    },

    #[error("n = {n} exceeds the enumeration cap of {cap} decisions")]
    EnumerationCap { n: usize, cap: usize },

    #[error("solution has {got} decisions, landscape expects {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("subtask {index} out of range (task has {count} subtasks)")]
    SubtaskOutOfRange { index: usize, count: usize },

    #[error("n = {n} is not divisible into {m} equal subtasks")]
    Indivisible { n: usize, m: usize },

    #[error("invalid contribution table: {0}")]
    InvalidTable(String),

    #[error("population of {p} agents cannot cover {m} subtasks")]
    PopulationTooSmall { p: usize, m: usize },

    #[error("period index must be >= 1, got {0}")]
    PeriodIndex(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no records to summarize")]
    EmptyInput,

    #[error("duplicate cell {0}")]
    DuplicateCell(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("incomplete grid: {} missing cell(s), first: {}", .missing.len(), .missing.first().map(String::as_str).unwrap_or("?"))]
    MissingCells { missing: Vec<String> },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI error summary.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DependencyCount { .. } => "dependency_count",
            Error::UnsupportedPattern { .. } => "unsupported_pattern",
            Error::EnumerationCap { .. } => "enumeration_cap",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::SubtaskOutOfRange { .. } => "subtask_out_of_range",
            Error::Indivisible { .. } => "indivisible",
            Error::InvalidTable(_) => "invalid_table",
            Error::PopulationTooSmall { .. } => "population_too_small",
            Error::PeriodIndex(_) => "period_index",
            Error::Config(_) => "config",
            Error::EmptyInput => "empty_input",
            Error::DuplicateCell(_) => "duplicate_cell",
            Error::UnknownFactor(_) => "unknown_factor",
            Error::MissingCells { .. } => "missing_cells",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
