use std::path::PathBuf;

use crate::data::DetectorKind;

/// Errors raised across the hunting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {0} has a different dimension than sample 0")]
    DimensionMismatch(usize),
    #[error("non-finite value at sample {0}, column {1}")]
    NonFiniteValue(usize, usize),
    #[error("expected dimension {expected}, got {actual}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training loss diverged (non-finite) at epoch {epoch}; lower the learning rate")]
    DivergedLoss { epoch: usize },
    #[error("subsample size {psi} exceeds dataset size {n}")]
    SubsampleTooLarge { psi: usize, n: usize },
    #[error("clustering degenerated: cluster {0} is empty and could not be reseeded")]
    DegenerateClustering(usize),
    #[error("covariance rank collapse: {n} samples for dimension {d}")]
    RankCollapse { n: usize, d: usize },
    #[error("k = {k} exceeds the number of samples {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("federation has no clients")]
    EmptyFederation,
    #[error("parameter vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("detector kind mismatch: expected {expected}, got {actual}")]
    KindMismatch { expected: DetectorKind, actual: DetectorKind },
    #[error("evaluation requires every sample to be labeled (sample {0} is not)")]
    UnlabeledData(usize),

    #[error("{factories} factories cannot form {k} clusters")]
    TooFewFactories { factories: usize, k: usize },
    #[error("cluster is empty")]
    EmptyCluster,

    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("trace contains no transactions")]
    EmptyTrace,

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{malformed} of {total} rows are malformed (limit 1%); first: {first}")]
    TooManyMalformedRows {
        malformed: usize,
        total: usize,
        first: String,
    },

    #[error("ROC requires both classes among the labels")]
    SingleClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
