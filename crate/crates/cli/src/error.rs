use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] wickwz_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("statistical check failed: {0}")]
    StatisticalFail(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use wickwz_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::StatisticalFail(_) => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::NonFiniteState { .. } => 3,
                E::Io(_) | E::Csv(_) | E::Json(_) => 1,
                _ => 2,
            },
        }
    }
}
