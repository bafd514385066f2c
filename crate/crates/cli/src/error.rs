use qcd_core::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::TooFewInputs { .. }
            | Error::Dimension { .. }
            | Error::DriftSign { .. }
            | Error::MissingRunLength(_) => Self::Config(e.to_string()),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => Self::Io(e.to_string()),
            _ => Self::Numeric(e.to_string()),
        }
    }
}
