use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unstable system ({context}): max real part of poles {max_real:.6e}")]
    Unstable { context: String, max_real: f64 },

    #[error("system is not strictly proper (nonzero D)")]
    NotStrictlyProper,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("scenario error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl Error {
    /// Process exit code: 2 schema/input, 3 instability, 4 numerical, 5 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::InvalidInput(_) | Error::OutOfBounds { .. } => 2,
            Error::Unstable { .. } => 3,
            Error::Dimension(_) | Error::Singular(_) | Error::NotStrictlyProper | Error::Numerical(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
