use alloc::string::String;
use core::fmt;

/// Error type shared by all modules.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Construction data violated a structural invariant.
    InvalidInput(String),
    /// An interval was given with `a >= b`.
    EmptyInterval { a: f64, b: f64 },
    /// A precondition on coefficients failed (e.g. `E <= sup V`).
    Precondition(String),
    /// The Wronskian is below the refusal threshold; inversion is ill-posed.
    NearResonance { lambda: crate::Complex, wronskian_abs: f64 },
    /// Boundary of a counting rectangle passes too close to a zero.
    BoundaryZero { location: crate::Complex, suggestion: String },
    /// Newton iteration failed to converge.
    NoConvergence(String),
    /// A decay fit was refused (floor-dominated or trendless window).
    FitRefused(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::EmptyInterval { a, b } => {
                write!(f, "empty interval: requires a < b, got a={a}, b={b}")
            }
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::NearResonance { lambda, wronskian_abs } => write!(
                f,
                "near-resonance: |W({}+{}i)| = {:.3e} is below the inversion threshold",
                lambda.re, lambda.im, wronskian_abs
            ),
            Error::BoundaryZero { location, suggestion } => write!(
                f,
                "zero of W near rectangle boundary at {}+{}i; {}",
                location.re, location.im, suggestion
            ),
            Error::NoConvergence(msg) => write!(f, "no convergence: {msg}"),
            Error::FitRefused(msg) => write!(f, "fit refused: {msg}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
