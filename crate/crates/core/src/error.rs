use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is out of the admissible range (fail-fast validation).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A quadruple violates the zero-momentum constraint of the momentum set.
    #[error("quadruple has nonzero momentum: {0}")]
    NonzeroMomentum(String),

    /// An operation requiring a resonant quadruple received a non-resonant one.
    #[error("quadruple is not resonant: {0}")]
    NotResonant(String),

    /// Two objects built over different lattice balls were combined.
    #[error("cutoff mismatch: {0}")]
    CutoffMismatch(String),

    /// Frequency content extends outside the resonance index ball.
    #[error("spectral support outside the index ball: {0}")]
    SupportOutsideBall(String),

    /// A numerical failsafe tripped (mass drift, non-finite samples).
    #[error("numerical failsafe: {0}")]
    NumericalFailsafe(String),

    /// An empirical fit could not be performed.
    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A binary cache file has an unexpected header or is truncated.
    #[error("corrupt cache file: {0}")]
    CorruptCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
