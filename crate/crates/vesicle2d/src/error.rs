//! Error type shared by all solver modules.

use alloc::string::String;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// A curve became degenerate (vanishing Jacobian, non-finite nodes).
    Geometry(String),
    /// An iterative solve did not reach its tolerance.
    SolverFailure {
        message: String,
        residual: f64,
        iterations: usize,
    },
    /// A time step could not be completed at any admissible step size.
    StepSizeUnderflow { t: f64, dt: f64 },
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Geometry(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::SolverFailure {
                message,
                residual,
                iterations,
            } => write!(
                f,
                "solver failure: {message} (residual {residual:.3e} after {iterations} iterations)"
            ),
            Error::StepSizeUnderflow { t, dt } => {
                write!(f, "step size underflow: dt = {dt:.3e} at t = {t:.6}")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}
