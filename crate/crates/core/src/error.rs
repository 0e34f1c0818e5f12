//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown prompt id {0}")]
    UnknownPrompt(usize),

    #[error("unknown response id {response} for prompt {prompt}")]
    UnknownResponse { prompt: usize, response: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("tied argmax in pi_star for prompt {0}; mode policy is undefined")]
    TiedMode(usize),

    #[error("missing label for pair ({y1}, {y2}) of prompt {prompt}")]
    MissingPairLabel { prompt: usize, y1: usize, y2: usize },

    #[error("conflicting labels for pair ({y1}, {y2}) of prompt {prompt}")]
    ConflictingPairLabel { prompt: usize, y1: usize, y2: usize },

    #[error("sample count must be at least 1")]
    EmptySample,

    #[error("KL divergence undefined: zero probability in second argument (prompt {prompt}, response {response})")]
    KlZeroSupport { prompt: usize, response: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch}: non-finite {what} ({value})")]
    TrainAbort {
        epoch: usize,
        what: &'static str,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}
