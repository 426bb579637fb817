use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resolvent is singular at {freq_hz} Hz")]
    Singular { freq_hz: f64 },

    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("channel {index}: {source}")]
    Channel {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("window at t = {t}: {source}")]
    Window {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Format,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidArgument(_)
            | Error::OutOfDomain { .. }
            | Error::UnsupportedDomain(_)
            | Error::InvalidPrior(_)
            | Error::InvalidBelief(_)
            | Error::Config(_) => ErrorClass::Config,
            Error::Singular { .. } | Error::NonFinite(_) | Error::OracleFailure(_) => {
                ErrorClass::Numerical
            }
            Error::Format(_)
            | Error::Version { .. }
            | Error::ManifestMismatch(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorClass::Format,
            Error::Channel { source, .. } | Error::Window { source, .. } => source.class(),
        }
    }

    pub(crate) fn in_channel(self, index: usize) -> Error {
        Error::Channel {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_window(self, t: f64) -> Error {
        Error::Window {
            t,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
