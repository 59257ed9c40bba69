use alloc::boxed::Box;
use alloc::string::String;

use crate::admissible::AdmissibilityReport;
use crate::pmc::PmcFailure;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("unbound variable `{name}` at byte {offset}")]
    UnboundVariable { name: &'static str, offset: usize },

    #[error("domain error at byte {offset}: {message}")]
    Domain { offset: usize, message: &'static str },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid needs at least 4 nodes per axis, got {0}")]
    TooFewNodes(usize),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("point ({x}, {y}) is not on the boundary")]
    NotOnBoundary { x: f64, y: f64 },

    #[error("boundary mean curvature is undefined at the corner ({x}, {y})")]
    Corner { x: f64, y: f64 },

    #[error("field belongs to a different grid")]
    GridMismatch,

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("linear solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("conjugate gradient breakdown at iteration {0}: matrix is not positive definite")]
    Breakdown(usize),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("{0}")]
    Pmc(Box<PmcFailure>),

    #[error("boundary data fails a required admissibility condition")]
    Inadmissible(Box<AdmissibilityReport>),
}

impl Error {
    /// Byte offset into the source text for expression errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            Error::Syntax { offset, .. }
            | Error::UnknownIdentifier { offset, .. }
            | Error::UnboundVariable { offset, .. }
            | Error::Domain { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}
