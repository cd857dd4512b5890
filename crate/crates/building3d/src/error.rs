use std::path::Path;

pub type Result<T> = std::result::Result<T, Error>;

/// A parse failure inside a text or binary format, located by line (or by
/// byte offset for binary payloads, reported as line 0).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        Self {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid CityGML: {0}")]
    CityGml(String),
    #[error(transparent)]
    Core(#[from] building3d_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, source: ParseError) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.display().to_string(),
            source,
        }
    }

    /// True when the failure is attributable to the caller's input rather
    /// than to the program.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Core(_))
    }
}
