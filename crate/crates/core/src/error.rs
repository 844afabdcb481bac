use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two buffers that must agree in length did not.
    #[error("length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// WAV parsing or encoding failure.
    #[error("wav: {0}")]
    Wav(String),

    /// Weights-file parsing or validation failure.
    #[error("weights: {0}")]
    Weights(String),

    /// Schedule fingerprint of a model does not match the active schedule.
    #[error("schedule fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    /// Sampling aborted because a non-finite value appeared.
    #[error("non-finite state at diffusion step t={step}: {what}")]
    SamplingDiverged { step: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
