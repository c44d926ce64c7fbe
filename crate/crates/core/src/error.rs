use std::path::PathBuf;

/// Errors shared across the corpus-processing modules.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate record id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("corpus at {path} holds `{found}` records, expected `{expected}`")]
    SourceMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("pair references unknown {side} record `{id}`")]
    DanglingPair { side: &'static str, id: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
