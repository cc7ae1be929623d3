//! Captcha detection: a 512-d image descriptor, PCA, three outlier
//! detectors with grid search, the k-known-styles experiment, a supervised
//! logistic baseline and a 2-D projection export.

mod detector;
mod ecod;
mod embeddings;
mod experiment;
mod features;
mod grid;
mod iforest;
mod linear;
mod lof;
mod matrix;
mod pca;
mod projection;

use thiserror::Error;

pub use detector::{
    check_contamination, contamination_threshold, fit_detector, DetectorKind, DetectorModel, DetectorParams, Scorer,
};
pub use ecod::EcodModel;
pub use embeddings::{load_embeddings, parse_embeddings};
pub use experiment::{run_outlier_experiment, AggregateRow, CombinationResult, DefenseReport};
pub use features::{
    extract_features_builtin, extract_file_features, extract_manifest_features, COLOR_BLOCK, EDGE_BLOCK,
    FEATURE_DIM, GLOBAL_HISTOGRAM_BLOCK, INTENSITY_BLOCK, TEXTURE_BLOCK,
};
pub use grid::{grid_search, Candidate, GridSelection, GridSpec};
pub use iforest::{average_path_length, IsolationForest, IsolationTree, Node, MAX_SUBSAMPLE};
pub use linear::{
    cross_style_generalization, fit_linear_classifier, logistic_loss_grad, GeneralizationRow, GeneralizationTable,
    LinearFit, LinearModel, LinearOptions, StyleCorpus,
};
pub use lof::{nearest, LofModel, NeighborIndex, Neighbors};
pub use matrix::{FeatureMatrix, FeatureSet};
pub use pca::{fit_pca, PcaModel};
pub use projection::{export_projection_2d, project_2d, write_projection_csv, ProjectedPoint};

use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("{id}: expected dimension {expected}, found {found}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("image has zero area")]
    DegenerateImage,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("{distinct_rows} distinct rows cannot support {components} components")]
    RankDeficient { distinct_rows: usize, components: usize },
    #[error("need at least {needed} training points, found {found}")]
    TooFewTrainingPoints { needed: usize, found: usize },
    #[error("validation set must contain both benign and captcha samples")]
    SingleClassValidation,
    #[error("{available} captcha styles available, {needed} needed")]
    InsufficientStyles { available: usize, needed: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
