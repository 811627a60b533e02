use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report. Each variant maps onto one stable
/// category string used by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("stream protocol error: {0}")]
    Protocol(String),
    #[error("format error in {field} at byte {offset}: {message}")]
    Format {
        field: String,
        offset: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Usage(_) => "usage",
            Error::Degenerate(_) => "degenerate",
            Error::Alignment(_) => "alignment",
            Error::Protocol(_) => "protocol",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the CLI; distinct per category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io(_) => 3,
            Error::Format { .. } => 4,
            Error::Shape(_) => 5,
            Error::Numeric(_) => 6,
            Error::Config(_) => 7,
            Error::Degenerate(_) => 8,
            Error::Alignment(_) => 9,
            Error::Protocol(_) => 10,
        }
    }

    pub(crate) fn format(field: impl Into<String>, offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            offset,
            message: message.into(),
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
