//! Crate-wide error type.

use std::fmt;

/// Errors reported by model loading, encoding, relaxation, solving and the
/// oracles. One flat enum keeps the pipeline signatures simple.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input text could not be parsed.
    Parse(String),
    /// Matrix/vector shapes do not line up.
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    /// A weight, bias or input entry is NaN or infinite.
    NonFiniteWeight(&'static str),
    /// An iterative procedure hit its iteration cap.
    NoConvergence { what: &'static str, iterations: usize },
    /// Equilibrium block whose feedback matrix has spectral norm >= 1.
    SpectralConditionViolated { norm: f64 },
    /// Class index out of range or equal to the predicted class.
    InvalidClassIndex { index: usize, classes: usize },
    /// Anchor index out of range or indices not distinct.
    InvalidAnchorIndex { index: usize, anchors: usize },
    /// A variable index fell outside the symbol table.
    IndexOutOfRange { index: usize, dim: usize },
    /// Slope bounds with lower > upper.
    InvalidSlopeBounds { lower: f64, upper: f64 },
    /// Clipped-ReLU threshold must be positive.
    InvalidTheta(f64),
    /// The requested norm is not handled by this operation.
    UnsupportedNorm(&'static str),
    /// Rational norm exponent below one or with a zero denominator.
    InvalidExponent { num: u32, den: u32 },
    /// Affine elimination found mutually dependent definitions.
    CyclicDefinition,
    /// Pattern enumeration refused: 2^n would be too large.
    TooManyNeurons { neurons: usize, limit: usize },
    /// The simplex solver lost numerical control.
    LpNumericalTrouble(&'static str),
    /// An activation without a concrete function (slope-only) cannot be evaluated.
    NonEvaluable(&'static str),
    /// No outcome records found under the report directory.
    EmptyDirectory(String),
    /// Malformed problem handed to a solver or exporter.
    InvalidProblem(&'static str),
    /// Underlying I/O failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::DimensionMismatch { context, expected, found } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, found {found}")
            }
            Error::NonFiniteWeight(what) => write!(f, "non-finite value in {what}"),
            Error::NoConvergence { what, iterations } => {
                write!(f, "{what} did not converge within {iterations} iterations")
            }
            Error::SpectralConditionViolated { norm } => {
                write!(f, "equilibrium feedback spectral norm {norm} >= 1")
            }
            Error::InvalidClassIndex { index, classes } => {
                write!(f, "invalid class index {index} for {classes} classes")
            }
            Error::InvalidAnchorIndex { index, anchors } => {
                write!(f, "invalid anchor index {index} for {anchors} anchors")
            }
            Error::IndexOutOfRange { index, dim } => {
                write!(f, "variable index {index} out of range for dimension {dim}")
            }
            Error::InvalidSlopeBounds { lower, upper } => {
                write!(f, "invalid slope bounds [{lower}, {upper}]")
            }
            Error::InvalidTheta(theta) => write!(f, "invalid clipped-ReLU threshold {theta}"),
            Error::UnsupportedNorm(ctx) => write!(f, "unsupported norm for {ctx}"),
            Error::InvalidExponent { num, den } => {
                write!(f, "invalid norm exponent {num}/{den}")
            }
            Error::CyclicDefinition => write!(f, "cyclic affine definitions"),
            Error::TooManyNeurons { neurons, limit } => {
                write!(f, "{neurons} neurons exceed enumeration limit {limit}")
            }
            Error::LpNumericalTrouble(msg) => write!(f, "simplex numerical trouble: {msg}"),
            Error::NonEvaluable(what) => write!(f, "cannot evaluate {what}"),
            Error::EmptyDirectory(dir) => write!(f, "no outcome records in {dir}"),
            Error::InvalidProblem(msg) => write!(f, "invalid problem: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
