use thiserror::Error;

/// Errors raised while building, training, or verifying safe predictors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid definition: {0}")]
    Spec(String),

    #[error("constraint unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("infeasible overlap regions (empty codomain): {}", keys.join(", "))]
    InfeasibleOverlap { keys: Vec<String> },

    #[error("overlap key {0} is not part of the partition")]
    PartitionIntegrity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite gradient in epoch {epoch}, step {step}")]
    NonFiniteGradient { epoch: usize, step: usize },

    #[error("non-finite loss in epoch {0}")]
    NonFiniteLoss(usize),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },

    #[error("malformed payload at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("constraint hash mismatch: model was built against {expected}, constraints file hashes to {found}")]
    HashMismatch { expected: String, found: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Deserialize JSON, reporting the path of the offending field on failure.
pub(crate) fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| Error::Parse {
        path: err.path().to_string(),
        message: err.inner().to_string(),
    })
}
