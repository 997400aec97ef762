use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Driver failures, classified by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration, unreadable checkpoint.
    #[error("config error: {0}")]
    Config(String),
    /// Flags that make no sense together.
    #[error("usage error: {0}")]
    Usage(String),
    /// Non-finite values, non-convergence, size or domain guards.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<pinn_core::Error> for CliError {
    fn from(e: pinn_core::Error) -> Self {
        use pinn_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Parse(_) | E::Checkpoint(_) | E::Contract(_) => CliError::Config(msg),
            E::Shape(_) | E::Domain(_) | E::Numeric(_) | E::Size(_) | E::NonConvergence(_) => CliError::Numeric(msg),
            E::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
