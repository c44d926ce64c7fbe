//! Batch client that drives an external rewriter model over a
//! chat-completions endpoint, with checkpointed, resumable, rate-limited
//! execution, plus a stub server for offline runs and tests.

pub mod checkpoint;
pub mod client;
pub mod stub;

pub use checkpoint::{Checkpoint, CheckpointEntry, CheckpointWriter};
pub use client::{assemble_cleaned, rewrite_corpus, AssembleReport, EndpointConfig, RewriteRunReport};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("checkpoint I/O failed at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid endpoint configuration: {0}")]
    Config(String),

    #[error("endpoint {url} is unreachable: {reason}")]
    Unreachable { url: String, reason: String },

    #[error(
        "checkpoint fingerprint mismatch: run was started with different \
         inputs or endpoint settings (checkpoint {found}, current {expected}); \
         delete the checkpoint or restore the original configuration"
    )]
    FingerprintMismatch { expected: String, found: String },

    #[error("corpus error: {0}")]
    Corpus(#[from] mathsift_core::CoreError),
}
