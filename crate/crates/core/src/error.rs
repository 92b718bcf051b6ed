use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while loading or validating a scene configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("value out of range for `{field}`: {message}")]
    Range { field: String, message: String },
    #[error("invalid index in `{field}`: {message}")]
    Index { field: String, message: String },
}

impl ConfigError {
    pub(crate) fn range(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Range {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn index(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Index {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("pixel ({x}, {y}) outside a {width}x{height} image")]
    PixelOutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("cost volume needs at least one member view")]
    EmptyMembers,
    #[error("invalid grid resolution {0:?}: every axis needs at least 2 nodes")]
    InvalidResolution([usize; 3]),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("support set is empty")]
    EmptySupport,
    #[error("support size {k} exceeds the {n} available candidates")]
    SupportTooLarge { k: usize, n: usize },
    #[error("{count} subsets exceed the enumeration cap of {cap}")]
    CombinatorialCap { count: u128, cap: u128 },
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("novel view {view}: {source}")]
    View {
        view: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_view(self, view: usize) -> Self {
        Error::View {
            view,
            source: Box::new(self),
        }
    }

    /// True when the error originates from configuration loading or validation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::View { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
