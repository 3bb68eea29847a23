use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SsdError> = std::result::Result<T, E>;

/// Error kinds surfaced by the pipeline. Each maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum SsdError {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema error in record {record}: {msg}")]
    Schema { record: usize, msg: String },

    #[error("conflicting values for author {author_id:?}: {msg}")]
    Consistency { author_id: String, msg: String },

    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),

    #[error("no in-vocabulary tokens to compose")]
    NoContent,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("K={k} outside feasible range [1, {max}]")]
    Bounds { k: usize, max: usize },

    #[error("degenerate rank: {0}")]
    DegenerateRank(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("sweep failed: {0}")]
    Sweep(String),
}

impl SsdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsdError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 IO, 4 data/schema, 5 numerical/feasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            SsdError::Config(_) => 2,
            SsdError::Io { .. } => 3,
            SsdError::Format { .. }
            | SsdError::EmptyInput(_)
            | SsdError::Schema { .. }
            | SsdError::Consistency { .. }
            | SsdError::UnknownWord(_)
            | SsdError::NoContent
            | SsdError::InsufficientData(_) => 4,
            SsdError::DimensionMismatch { .. }
            | SsdError::Bounds { .. }
            | SsdError::DegenerateRank(_)
            | SsdError::Degenerate(_)
            | SsdError::Sweep(_) => 5,
        }
    }

    /// Stable short identifier used in the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            SsdError::Config(_) => "config",
            SsdError::Io { .. } => "io",
            SsdError::Format { .. } => "format",
            SsdError::EmptyInput(_) => "empty_input",
            SsdError::Schema { .. } => "schema",
            SsdError::Consistency { .. } => "consistency",
            SsdError::UnknownWord(_) => "unknown_word",
            SsdError::NoContent => "no_content",
            SsdError::InsufficientData(_) => "insufficient_data",
            SsdError::DimensionMismatch { .. } => "dimension_mismatch",
            SsdError::Bounds { .. } => "bounds",
            SsdError::DegenerateRank(_) => "degenerate_rank",
            SsdError::Degenerate(_) => "degenerate",
            SsdError::Sweep(_) => "sweep",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(SsdError::Config("x".into()).exit_code(), 2);
        let io = SsdError::io("/nope", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(io.exit_code(), 3);
        assert_eq!(SsdError::NoContent.exit_code(), 4);
        assert_eq!(SsdError::Bounds { k: 9, max: 3 }.exit_code(), 5);
    }
}
