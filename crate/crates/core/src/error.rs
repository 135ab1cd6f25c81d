use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("unsupported-configuration: {0}")]
    Unsupported(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("alignment failure: {0}")]
    Alignment(String),

    #[error("interpolation failure: {0}")]
    Interpolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data mismatch: {0}")]
    Mismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Unsupported(_)
            | Error::Config(_)
            | Error::Shape(_) => 2,
            Error::Mismatch(_) | Error::Format(_) | Error::Interpolation(_) => 3,
            Error::Singularity(_)
            | Error::Numeric(_)
            | Error::RankDeficient(_)
            | Error::UndefinedMetric(_)
            | Error::Estimation(_)
            | Error::Alignment(_) => 4,
            Error::Io(_) => 3,
        }
    }
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
