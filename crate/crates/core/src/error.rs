use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range; `field` names it.
    InvalidParameter { field: &'static str, reason: String },
    /// Two paths that must share a grid do not.
    GridMismatch,
    /// A time is not a grid point or an index is past the horizon.
    OffGrid { t: f64 },
    /// Dominating jump rate exceeded at a visited state.
    RateBoundExceeded { t: f64, state: f64, rate: f64, bound: f64 },
    /// Adaptive quadrature did not reach the requested accuracy.
    QuadratureDivergence { estimate: f64, change: f64 },
    /// A path left the interval on which its coefficients are tabulated.
    ExitedInterval { t: f64, state: f64, lo: f64, hi: f64 },
    /// A PDMP flow left the state space by more than the tolerance.
    FlowEscaped { t: f64, state: f64 },
    /// Successive mollified iterates are not Cauchy.
    SigmaNotConverged { distances: alloc::vec::Vec<f64>, tol: f64 },
    /// `exp(-Sigma)` over/underflowed, so `h'` cannot be formed.
    SigmaUnbounded { x: f64, value: f64 },
    /// A bijective transform has a vanishing derivative on the path range.
    NotBijective { x: f64, derivative: f64 },
    /// Ground-truth component needed by an estimator is absent.
    MissingGroundTruth(&'static str),
    /// The starting point of a path does not match the declared one.
    StartMismatch { expected: f64, found: f64 },
    /// Test function outside an operator's declared domain.
    OutsideDomain(String),
    /// Expression parse error at byte offset `pos`.
    Parse { pos: usize, msg: String },
    /// Unknown variable or function in an expression.
    UnknownSymbol(String),
    /// Empty input where at least one element is required.
    Empty(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { field, reason } => write!(f, "invalid `{field}`: {reason}"),
            Error::GridMismatch => write!(f, "paths live on different time grids"),
            Error::OffGrid { t } => write!(f, "time {t} is not a grid point of the path"),
            Error::RateBoundExceeded { t, state, rate, bound } => write!(
                f,
                "jump intensity {rate} exceeds declared bound {bound} at state x={state} (t={t})"
            ),
            Error::QuadratureDivergence { estimate, change } => write!(
                f,
                "quadrature did not converge (estimate {estimate}, relative change {change})"
            ),
            Error::ExitedInterval { t, state, lo, hi } => write!(
                f,
                "path left the working interval [{lo}, {hi}] at t={t} (state {state})"
            ),
            Error::FlowEscaped { t, state } => {
                write!(f, "flow escaped [0,1] at t={t} (state {state})")
            }
            Error::SigmaNotConverged { distances, tol } => write!(
                f,
                "sigma limit not numerically verified: successive sup-distances {distances:?} do not fall below {tol}"
            ),
            Error::SigmaUnbounded { x, value } => {
                write!(f, "Sigma({x}) = {value} makes exp(-Sigma) overflow")
            }
            Error::NotBijective { x, derivative } => {
                write!(f, "derivative {derivative} at x={x}: transform is not bijective there")
            }
            Error::MissingGroundTruth(what) => write!(f, "missing ground truth: {what}"),
            Error::StartMismatch { expected, found } => {
                write!(f, "path starts at {found}, expected {expected}")
            }
            Error::OutsideDomain(msg) => write!(f, "outside domain: {msg}"),
            Error::Parse { pos, msg } => write!(f, "parse error at {pos}: {msg}"),
            Error::UnknownSymbol(s) => write!(f, "unknown symbol `{s}`"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
