//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by waveform construction, estimators, and the analysis model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A type invariant was violated at construction time.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The signal does not cover the requested number of OFDM symbols.
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// AWGN cannot be scaled against a zero-power signal.
    #[error("signal has zero power")]
    ZeroPowerSignal,

    /// A phase comparison received a zero-valued input.
    #[error("zero-valued input")]
    ZeroInput,

    /// The accumulated correlation has zero magnitude; no phase is defined.
    #[error("correlation magnitude is zero")]
    ZeroCorrelation,

    /// Paired buffers have different lengths.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// The grid or pilot map does not contain the configured pilots.
    #[error("missing pilots: {0}")]
    MissingPilots(String),

    /// An analysis-model argument is outside its domain.
    #[error("domain error: {0}")]
    DomainError(String),

    /// The requested prediction needs a stage that is disabled.
    #[error("stage disabled: {0}")]
    StageDisabled(&'static str),

    /// Not enough samples to build a histogram.
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
