use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error on row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate key (period={period}, country={country}, domain={domain})")]
    DuplicateKey {
        period: String,
        country: String,
        domain: String,
    },

    #[error("invalid padding: {0}")]
    InvalidPadding(String),

    #[error("count {value} is outside the support (minimum {min})")]
    OutsideSupport { value: u64, min: u64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("model specification error: {0}")]
    Spec(String),

    #[error("initialisation error: {0}")]
    Init(String),

    #[error("interval error: {0}")]
    Interval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
