use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration, or a missing input file.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Toolbox(#[from] hessian_toolbox::Error),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Toolbox(e) if e.is_numerical() => 3,
            CliError::Toolbox(hessian_toolbox::Error::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
