//! Error type shared across the crate.

/// Everything that can go wrong in this crate, grouped loosely by the stage
/// that produces it. The CLI maps these onto process exit codes, so keep the
/// grouping stable: configuration problems are recoverable by editing inputs,
/// data problems by fixing the series, numerical problems usually mean the
/// requested computation is ill-posed at the given values.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter value violates its documented domain (negative variance,
    /// autoregressive coefficient outside the stationary region, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A quantity left the domain where a transformation is defined, e.g.
    /// inverting a measurement equation at an observation it cannot produce.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller handed us structurally unusable input (wrong length, empty
    /// series, missing field) rather than bad numbers.
    #[error("invalid input: {0}")]
    Input(String),

    /// Operation requested for a model that does not support it.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A moment calculation collapsed (non-positive variance where a positive
    /// one is required, all weights zero, ...).
    #[error("degenerate moments: {0}")]
    Degenerate(String),

    /// Problems reading or interpreting an experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Problems reading or validating an observation series.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the command line tool should terminate with when this error
    /// reaches the top level: 2 config, 3 data, 4 numerical trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Unsupported(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::InvalidParameter(_) | Error::Domain(_) | Error::Degenerate(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
