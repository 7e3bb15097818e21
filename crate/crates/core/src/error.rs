use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum MvsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("insufficient views: need at least {needed}, got {got}")]
    InsufficientViews { needed: usize, got: usize },

    #[error("{}:{line}: {message}", file.display())]
    Format {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("unknown scene template `{0}`")]
    UnknownTemplate(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
}

impl MvsError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Self::Format {
            file: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Broad category used for CLI exit messages.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Io { .. } | Self::Image { .. } => "io",
            Self::Format { .. } => "format",
            Self::InsufficientViews { .. } => "insufficient-views",
            Self::UnknownTemplate(_) | Self::InvalidArgument(_) => "usage",
            Self::EmptyCloud(_) => "empty-cloud",
            Self::DegeneratePlane(_) | Self::DegenerateSupport(_) => "numeric",
        }
    }
}

pub type Result<T, E = MvsError> = std::result::Result<T, E>;
