use thiserror::Error;

/// Errors surfaced by the simulation and evaluation APIs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("training system is ill-conditioned (regularization too small for this trajectory)")]
    IllConditionedTraining,

    #[error("SNR undefined: noise sequence has zero RMS")]
    UndefinedSnr,

    #[error("bitization produced no qualifying extrema")]
    EmptyBitSequence,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
