use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown potential `{0}` (expected free, stark:E=<float>, harmonic, abscubed or breathing)")]
    UnknownPotential(String),

    #[error("orbit state became non-finite at s = {s}")]
    NonFinite { s: f64 },

    #[error("t = {t} is not below the safe horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("shooting did not converge after {iterations} Newton steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("variational Jacobian is singular: |det J(0)| = {det:e}")]
    SingularJacobian { det: f64 },

    #[error("window width {width} is below 4 grid steps of {step}")]
    GridTooCoarse { width: f64, step: f64 },

    #[error("integrand modulus on the truncation boundary is {ratio:e} of its peak")]
    TruncationTooTight { ratio: f64 },

    #[error("harmonic kernel is singular at the conjugate time, t = {t} >= pi")]
    ConjugatePoint { t: f64 },

    #[error("all abscissae coincide or too few points; slope is undefined")]
    DegenerateFit,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
