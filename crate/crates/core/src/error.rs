use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// An argument lies outside the domain of the function.
    #[error("{what}: argument {value} outside domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The Contois rate is not defined at (s, y) = (0, 0).
    #[error("Contois growth rate is undefined at (s, y) = (0, 0)")]
    UndefinedPoint,

    /// A structural or hypothesis problem with the scenario.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// A state that does not fit the scenario or violates a precondition.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A root finder was given a bracket without a sign change.
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// The requested value lies above the supremum of a bounded function.
    #[error("demand {value} exceeds the supremum {sup} of the quota function")]
    UnboundedDemand { value: f64, sup: f64 },

    /// An iterative numerical method failed to converge.
    #[error("{method} did not converge after {iterations} iterations")]
    NonConvergence { method: &'static str, iterations: usize },

    /// Eigenvalue iteration stalled; the eigenvalues found so far are kept.
    #[error("QR iteration did not converge ({} eigenvalues recovered)", partial.len())]
    EigenNonConvergence { partial: Vec<(f64, f64)> },

    /// A NaN or infinite value was met.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, ModelError>;
