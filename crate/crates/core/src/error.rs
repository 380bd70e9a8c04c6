use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate least-squares system (rank-deficient design with zero ridge)")]
    DegenerateSystem,
    #[error("non-finite value produced at tape node {node}")]
    NumericOverflow { node: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid world parameter: {0}")]
    InvalidWorldParam(String),
    #[error("delay window of {window} is shorter than 2n+1 = {required}")]
    WindowTooShort { window: usize, required: usize },
    #[error("restriction `{name}` accepted {accepted} of {trials} trial draws")]
    RestrictionTooTight {
        name: String,
        accepted: usize,
        trials: usize,
    },

    #[error("network has no interior cut-off: {0}")]
    NoInteriorCutoff(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("intervention editor returned shape {got:?}, expected {expected:?}")]
    InterventionShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid probe specification: {0}")]
    InvalidProbeSpec(String),
    #[error("invalid check specification: {0}")]
    InvalidSpec(String),
    #[error("aspect is constant on the data (entropy {entropy:.4} nats < {floor})")]
    NonconstancyViolated { entropy: f64, floor: f64 },
    #[error("probe cannot be steered to model value {target}")]
    UnreachableTarget { target: String },

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },
    #[error("artifact missing: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("hash mismatch for {what}: expected {expected}, found {found}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("malformed artifact: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn at_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
