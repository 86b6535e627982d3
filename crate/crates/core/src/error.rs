use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}: no interactions")]
    EmptyInput(PathBuf),

    #[error("dataset eliminated by k-core (k = {0})")]
    KCoreEliminated(usize),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature dimension incompatible; rebuild target features with k={expected} (family {family}, target has k={got})")]
    IncompatibleFeatures {
        family: String,
        expected: usize,
        got: usize,
    },

    #[error("artifact chain mismatch: {0} (pass --force to override)")]
    ChainMismatch(String),

    #[error("id-based baseline cannot score cold entities ({0})")]
    ColdEntity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed artifact {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error below any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_)
            | Error::IncompatibleFeatures { .. }
            | Error::ChainMismatch(_)
            | Error::ColdEntity(_) => 2,
            Error::Numeric(_) | Error::DimensionMismatch { .. } => 4,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyInput(_)
            | Error::KCoreEliminated(_)
            | Error::Data(_)
            | Error::Artifact { .. }
            | Error::Json(_) => 3,
        }
    }
}
