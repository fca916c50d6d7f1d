use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable linearization: M2^2 = {m2_sq} < 0")]
    UnstableSpectrum { m2_sq: f64 },

    #[error("dispersion radicand {radicand} is negative beyond tolerance {tolerance}")]
    NegativeRadicand { radicand: f64, tolerance: f64 },

    #[error("gapped spectrum (M2^2 = {m2_sq}) has no sound speed")]
    GappedSpectrum { m2_sq: f64 },

    #[error("p0 = {p0} lies within {guard} of the pole at {pole}")]
    NearPole { p0: f64, pole: f64, guard: f64 },

    #[error("infrared shell: omega_minus vanishes at |p| = {p}")]
    InfraredShell { p: f64 },

    #[error("quadrature did not converge: value {value}, error estimate {error} after {subdivisions} subdivisions")]
    QuadratureNonconvergence {
        value: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("root bracket failure: {0}")]
    BracketFailure(String),

    #[error("root finder did not converge after {iterations} iterations (bracket width {width})")]
    RootNonconvergence { iterations: usize, width: f64 },

    #[error("too many graphs: predicted {predicted} exceeds limit {limit}")]
    TooManyGraphs { predicted: u128, limit: u128 },

    #[error("degree bound exceeded: {0}")]
    DegreeBound(String),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for failures of an iterative or adaptive numerical scheme.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNonconvergence { .. }
                | Error::RootNonconvergence { .. }
                | Error::BracketFailure(_)
                | Error::FitRejected(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
