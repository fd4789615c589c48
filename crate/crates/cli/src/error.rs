use intersyn_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

impl CliError {
    /// 2 for rejected inputs, 3 for numeric divergence, 1 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Json(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_FAILURE,
            CliError::Core(e) => match e {
                CoreError::DivergenceDetected { .. } | CoreError::NonFinite(_) => EXIT_DIVERGED,
                CoreError::Io(_) => EXIT_FAILURE,
                _ => EXIT_INVALID,
            },
        }
    }
}
