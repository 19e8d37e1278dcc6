use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<qhe_core::Error> for CliError {
    fn from(e: qhe_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
