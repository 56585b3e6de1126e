use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("malformed dump {path}: {reason}")]
    Malformed { path: String, reason: String },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: invmetrics::Error,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn core(context: impl Into<String>, source: invmetrics::Error) -> Self {
        CliError::Core { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}
