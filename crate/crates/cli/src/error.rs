use sde_pmcmc::ErrorCategory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numeric(sde_pmcmc::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } | CliError::CorruptArchive(_) => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io { .. } => "io",
            CliError::CorruptArchive(_) => "corrupt-archive",
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<sde_pmcmc::Error> for CliError {
    fn from(e: sde_pmcmc::Error) -> Self {
        match e.category() {
            ErrorCategory::Config => CliError::Config(e.to_string()),
            ErrorCategory::Numeric => CliError::Numeric(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
