use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nucdecay::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 configuration, 3 numerical failure, 4 capacity,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                nucdecay::Error::Capacity { .. } => 4,
                e if e.is_numerical() => 3,
                nucdecay::Error::Io(_) | nucdecay::Error::Json(_) => 1,
                _ => 2,
            },
        }
    }
}
