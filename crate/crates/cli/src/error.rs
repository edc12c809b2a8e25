use blockhunter_core::Error as CoreError;

/// Failures surfaced to the shell: configuration problems exit with 2,
/// everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Prefixes the message with a config path or file for context.
    pub fn context(self, at: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{at}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{at}: {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ConfigInvalid(_)
            | CoreError::TooFewFactories { .. }
            | CoreError::InvalidParameter(_)
            | CoreError::KTooLarge { .. }
            | CoreError::FileNotFound(_)
            | CoreError::SchemaMismatch(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
