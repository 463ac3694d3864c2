use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The source checker colors do not span RGB; callers fall back to WB-only mapping.
    #[error("rank-deficient system: smallest eigenvalue {min_eig:e} vs largest {max_eig:e}")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error("singular matrix: determinant {det:e}")]
    Singular { det: f64 },

    /// Two illuminants are too close to form a negative pair.
    #[error("illuminants too close: {degrees:.4} degrees")]
    IlluminantsTooClose { degrees: f64 },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported format version: {0}")]
    UnsupportedVersion(String),

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Singular { .. } => "singular",
            Error::IlluminantsTooClose { .. } => "illuminants_too_close",
            Error::Diverged { .. } => "diverged",
            Error::Format { .. } => "format",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Config { .. } => "config",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
