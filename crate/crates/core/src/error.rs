use thiserror::Error;

/// Errors raised by the workbench. Variants map one-to-one onto the failure
/// modes of the individual operations so callers can match on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid genus {0}: need genus >= 2")]
    InvalidGenus(i64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node is pinched (t = 0): charts do not overlap")]
    NoOverlap,
    #[error("zero classification inconclusive: {0}")]
    InconclusiveClassification(String),
    #[error("quadratic differential vanishes identically")]
    DegenerateDifferential,
    #[error("pole order estimate inconclusive: {0}")]
    InconclusivePoleOrder(String),
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("gauge transformation is singular at grid point {0}")]
    SingularGauge(usize),
    #[error("singular gauge cannot be applied on a grid containing the origin")]
    SingularGaugeDomain,
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("cannot glue across a pinched node")]
    CannotGlue,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("sample point outside the profile range: {0}")]
    Range(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("inconsistent monodromy: {0}")]
    InconsistentMonodromy(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
