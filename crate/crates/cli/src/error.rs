use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// Output failures (unwritable directories) count as configuration
    /// problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<hitchin_core::Error> for CliError {
    fn from(e: hitchin_core::Error) -> Self {
        use hitchin_core::Error as E;
        match e {
            E::InvalidGenus(_)
            | E::InvalidParameter(_)
            | E::InconsistentMonodromy(_)
            | E::AssumptionViolation(_)
            | E::CannotGlue
            | E::NoOverlap
            | E::Resolution(_)
            | E::SingularGaugeDomain => CliError::Config(e.to_string()),
            E::Io(_) | E::Serde(_) => CliError::Output(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
