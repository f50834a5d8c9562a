use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stretch parameters must be positive and finite, got {0}")]
    NonPositiveStretch(f64),

    #[error("relative stretch {0} is outside the supported range [{min}, {max}]", min = crate::geometry::GAMMA_MIN, max = crate::geometry::GAMMA_MAX)]
    DegenerateStretch(f64),

    #[error("range parameter must be positive and finite, got {0}")]
    NonPositiveRange(f64),

    #[error("ball radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sites {0} and {1} coincide (closer than 1e-9)")]
    DuplicateSites(usize, usize),

    #[error("grid metadata is required but the site set has none")]
    MissingGridMetadata,

    #[error("grid metadata inconsistent with site list: {0}")]
    InconsistentGrid(String),

    #[error("Cholesky factorization failed even with diagonal jitter {jitter:e}")]
    FactorizationFailed { jitter: f64 },

    #[error("at least {required} sites are required, got {got}")]
    InsufficientSites { required: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
