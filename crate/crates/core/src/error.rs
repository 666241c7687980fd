use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed signal: {0}")]
    MalformedSignal(String),

    #[error("under-determined grid: {n_dirs} directions cannot resolve order {order} ({needed} coefficients)")]
    UnderdeterminedGrid {
        n_dirs: usize,
        order: usize,
        needed: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("incomplete scene: {0}")]
    IncompleteScene(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Geometry,
    Format,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Argument(_)
            | Error::Shape(_)
            | Error::Dimension(_)
            | Error::UnderdeterminedGrid { .. }
            | Error::InvalidGrid(_)
            | Error::IncompleteScene(_)
            | Error::Config(_) => ErrorCategory::Config,
            Error::Geometry(_) => ErrorCategory::Geometry,
            Error::MalformedSignal(_) | Error::Format { .. } | Error::Io(_) => {
                ErrorCategory::Format
            }
            Error::Singularity(_) | Error::IllConditioned(_) => ErrorCategory::Numerical,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
