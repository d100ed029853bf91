use thiserror::Error;

/// Errors surfaced by the library. Variants map onto the CLI exit-code
/// classes: data/validation problems exit 2, numeric aborts exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code class for the CLI: 2 for data/validation/format/io trouble,
    /// 3 for numeric aborts (non-finite values mid-computation).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
