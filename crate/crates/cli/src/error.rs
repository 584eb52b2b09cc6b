use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] diffckm::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    /// 0 ok, 1 other failures, 2 infeasible plans, 3 numerical failures.
    pub fn exit_code(&self) -> u8 {
        use diffckm::Error as E;
        match self {
            CliError::Core(E::Infeasible(_)) => 2,
            CliError::Core(E::Numeric(_) | E::NonFinite(_) | E::Divergence { .. }) => 3,
            _ => 1,
        }
    }
}
