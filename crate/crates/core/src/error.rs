use thiserror::Error;

/// Errors shared across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeOutOfRange { index: usize, n_modes: usize },

    #[error("repeated mode index {0}")]
    RepeatedMode(usize),

    #[error("transmissivity must lie in [0, 1], got {0}")]
    EtaOutOfRange(f64),

    #[error("squeezing parameter must be non-negative, got {0}")]
    NegativeSqueezing(f64),

    #[error(
        "degenerate measurement pair: theta_a = {theta_a} and theta_b = {theta_b} coincide mod pi"
    )]
    DegenerateAnglePair { theta_a: f64, theta_b: f64 },

    #[error("singular gate parametrization at phi = {0} rad")]
    SingularParametrization(f64),

    #[error("parameter {name} = {value} outside the valid range {range}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("gate compilation did not converge: best residual {best_residual:e}")]
    CompileFailed { best_residual: f64 },

    #[error("invalid measurement schedule: {0}")]
    InvalidSchedule(String),

    #[error("schedule is inconsistent with chain config: {0}")]
    InconsistentSchedule(String),

    #[error("zero denominator in correlation estimator (entry {0})")]
    ZeroDenominator(usize),

    #[error("basis mismatch between nullifier spec and records: {0}")]
    BasisMismatch(String),

    #[error("bootstrap needs at least 2 resamples, got {0}")]
    TooFewResamples(usize),

    #[error("bin index {index} out of range for {n_bins} bins")]
    BinOutOfRange { index: usize, n_bins: usize },

    #[error("frame holds at most {max} bin values, got {got}")]
    TooManyBinValues { max: usize, got: usize },

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error("covariance is not positive definite (numerical failure)")]
    NotPositiveDefinite,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
