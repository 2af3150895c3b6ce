use std::fmt;

/// Errors produced by the library operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A word letter or component index is out of range for the system.
    InvalidIndex { index: usize, len: usize },
    /// An enumeration would exceed the configured atom/word budget.
    BudgetExceeded { requested: u128, budget: u64, hint: &'static str },
    /// Two maps of the system are identical, so coincidence equations are degenerate.
    DegenerateSystem { first: usize, second: usize },
    /// A scalar argument lies outside its admissible range.
    Domain(String),
    /// Patch geometry validation failed (overlapping or misplaced neighborhoods).
    Geometry(String),
    /// Component counts or dimensions do not match.
    Shape { expected: usize, got: usize },
    /// The queried point is not an image of the given point under any map.
    NotAnImage,
    /// Component functions disagree at a branch value.
    BranchCompatibility { value_index: usize, detail: String },
    /// A preset failed its load-time self-verification.
    PresetIntegrity(String),
    /// Measure masses are incompatible beyond their certified defects.
    Normalization { lhs: f64, rhs: f64 },
    /// Invalid run configuration (bad flags, schema violations, missing files).
    Config(String),
    /// An affine map is singular and therefore not a proper contraction.
    NotAContraction(String),
    /// A precondition of the operation does not hold for the supplied data.
    Precondition(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidIndex { index, len } => {
                write!(f, "index {index} out of range for {len} maps")
            }
            Error::BudgetExceeded { requested, budget, hint } => {
                write!(f, "enumeration of {requested} items exceeds budget {budget}; {hint}")
            }
            Error::DegenerateSystem { first, second } => {
                write!(f, "maps {first} and {second} are identical; coincidence set is degenerate")
            }
            Error::Domain(s) => write!(f, "domain error: {s}"),
            Error::Geometry(s) => write!(f, "patch geometry error: {s}"),
            Error::Shape { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::NotAnImage => write!(f, "point is not an image of the given point under any map"),
            Error::BranchCompatibility { value_index, detail } => {
                write!(f, "branch compatibility violated at branch value #{value_index}: {detail}")
            }
            Error::PresetIntegrity(s) => write!(f, "preset self-verification failed: {s}"),
            Error::Normalization { lhs, rhs } => {
                write!(f, "total masses {lhs} and {rhs} differ beyond certified defects")
            }
            Error::Config(s) => write!(f, "configuration error: {s}"),
            Error::NotAContraction(s) => write!(f, "not a proper contraction: {s}"),
            Error::Precondition(s) => write!(f, "precondition failed: {s}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
