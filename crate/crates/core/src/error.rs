use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or scenario parameter violates its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    /// A requested SNR cannot be met at any admissible sensor temperature.
    #[error("infeasible fidelity: {0}")]
    InfeasibleFidelity(String),

    /// Boundaries that make the closed-form schedule undefined.
    #[error("schedule configuration error: {0}")]
    Schedule(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("preset error: {0}")]
    Preset(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
