use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario, bad file, incompatible method choice.
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] tiered_core::Error),

    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            CliError::Core(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot {what} {}: {e}", path.display()))
}
