use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid simplex vector: {0}")]
    InvalidSimplex(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("generator is not uniquely ergodic: {0}")]
    NotUniquelyErgodic(String),

    #[error("parameter {theta} outside closed interval [{min}, {max}]")]
    ParameterOutOfRange { theta: f64, min: f64, max: f64 },

    #[error("non-finite observation increment at step {step}")]
    NonFiniteObservation { step: usize },

    #[error("non-finite likelihood at theta = {theta}")]
    NonFiniteLikelihood { theta: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("study aborted: {failed} of {total} replications failed")]
    StudyAborted { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
