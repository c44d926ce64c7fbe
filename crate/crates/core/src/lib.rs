//! Batch toolkit for turning noisy web-crawled Chinese math Q/A corpora into
//! clean supervised fine-tuning datasets.
//!
//! The pipeline pairs crawled records with clean seed records by fuzzy
//! matching, renders training pairs for a rewriter model, validates the
//! rewriter's outputs, and grades predicted answers against gold answers.
//! A rule-based cleaning baseline and a synthetic error injector are included
//! so every stage can be exercised without proprietary data.

pub mod corpus;
pub mod degrader;
pub mod error;
pub mod evaluator;
pub mod matcher;
pub mod report;
pub mod rulecleaner;
pub mod samples;
pub mod sftgen;

pub use corpus::{normalize, Corpus, NormalizedText, Record, Source};
pub use error::CoreError;
