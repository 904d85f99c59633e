use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("analysis failure: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) => 3,
            Self::Analysis(_) => 4,
        }
    }
}

impl From<dqs_core::Error> for CliError {
    fn from(e: dqs_core::Error) -> Self {
        Self::Solver(e.to_string())
    }
}
