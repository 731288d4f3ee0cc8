use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label `{label}` is not declared for dataset `{dataset_id}`")]
    UnknownLabel { label: String, dataset_id: String },

    #[error("empty label name")]
    EmptyLabel,

    #[error("empty text")]
    EmptyText,

    #[error("label set for `{0}` is empty")]
    EmptyLabelSet(String),

    #[error("duplicate label `{label}` in dataset `{dataset_id}`")]
    DuplicateLabel { label: String, dataset_id: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("dataset `{0}` appears in both pretrain and test partitions")]
    PartitionOverlap(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{what} must lie in [0, 1], got {value}")]
    Fraction { what: &'static str, value: f64 },

    #[error("infeasible batch spec: {0}")]
    InfeasibleBatch(String),

    #[error("invalid batch spec: {0}")]
    BatchSpec(String),

    #[error("zero-norm vector passed to cosine similarity")]
    ZeroNorm,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("anchor {0} has no off-diagonal positive")]
    NoPositive(usize),

    #[error("temperature must be positive, got {0}")]
    Temperature(f64),

    #[error("label `{0}` has no candidate pairs in the support set")]
    NoCandidates(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("batch {batch} contains example from excluded dataset `{dataset_id}`")]
    ExcludedDataset { batch: usize, dataset_id: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("relative performance gain undefined for a zero baseline accuracy")]
    ZeroBaseline,

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
