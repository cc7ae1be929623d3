//! Manifests, benign-corpus ingestion, deterministic splits, experiment
//! plans, word lists and annotation files.

mod annotations;
mod ingest;
mod manifest;
mod plan;
mod split;
mod surrogate;
mod wordlist;

use std::path::Path;

use thiserror::Error;

pub use annotations::{load_annotations, parse_annotations, AnnotationRecord, AnnotationSet};
pub use ingest::{ingest_benign, SkipEntry};
pub use manifest::{Label, Manifest, ManifestRecord};
pub(crate) use manifest::hex_digest;
pub use plan::{make_outlier_plan, ExperimentPlan, StyleCombination, BENIGN_CAP};
pub use split::{apportion, make_splits, Fractions, Partition, SplitPlan};
pub use surrogate::{random_payloads, synthesize_surrogate_styles, SURROGATE_PREFIX};
pub use wordlist::{load_wordlist, parse_wordlist, WordList};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("no decodable images under {0}")]
    EmptyDirectory(String),
    #[error("split fractions {0:?} must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
    #[error("{available} styles available, need more than {needed}")]
    TooFewStyles { available: usize, needed: usize },
    #[error("word list is empty")]
    EmptyList,
    #[error("annotation references unknown sample {0:?}")]
    DanglingReference(String),
    #[error("difficulty {value} for sample {sample:?} outside 1..=5")]
    DifficultyOutOfRange { sample: String, value: i64 },
    #[error("partition hygiene violated: {0}")]
    HygieneViolation(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}
