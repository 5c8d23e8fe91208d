use std::fmt;

/// Errors reported by model construction, solvers and the file formats.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed input data (shape mismatch, NaN cost, bad labeling, ...).
    InvalidInput(String),
    /// A graph does not have the structure an operation requires
    /// (chain expected, acyclic block expected, ...).
    InvalidStructure(String),
    /// Weights violate their constraints (negative, wrong normalization).
    InvalidWeights(String),
    /// A pairwise factor that must be submodular is not; names the edge.
    SubmodularityViolation { edge: (usize, usize) },
    /// Text format error with a 1-based line number.
    Parse { line: usize, msg: String },
    /// Exhaustive enumeration refused because the label space is too large.
    CapExceeded { states: f64, cap: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidStructure(msg) => write!(f, "invalid structure: {msg}"),
            Error::InvalidWeights(msg) => write!(f, "invalid weights: {msg}"),
            Error::SubmodularityViolation { edge } => {
                write!(f, "pairwise factor ({}, {}) is not submodular", edge.0, edge.1)
            }
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::CapExceeded { states, cap } => {
                write!(f, "label space too large for enumeration: {states:.3e} states (cap {cap:.3e})")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
