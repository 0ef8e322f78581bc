//! Crate-wide error type with an exit-code category per failure class.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file: wrong columns, unparseable cells, bad header.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    /// Configuration file that parses but is not usable.
    #[error("config error: {0}")]
    Config(String),

    /// A documented operation precondition does not hold for the inputs.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Argument outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Logistic coefficients diverged; the data are (quasi-)separated.
    #[error("perfect separation suspected: max |coefficient| reached {max_coefficient:.3e}")]
    Separation { max_coefficient: f64 },

    /// Singular weighted normal equations in IRLS.
    #[error("singular normal equations: column {column} ({name}) is collinear")]
    RankDeficient { column: usize, name: String },

    /// An iterative numeric routine ran out of iterations.
    #[error("{what} failed to converge within {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    /// A numeric routine met a non-finite value.
    #[error("non-finite value in {what} at {at}")]
    NonFinite { what: String, at: f64 },

    /// A subtype stratum cannot support the requested fit or estimator.
    #[error("subtype stratum {subtype}: {message}")]
    Stratum { subtype: String, message: String },

    #[error("estimate failed: {0}")]
    Estimate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 schema, 3 precondition, 4 numeric,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::Config(_) | Error::Csv(_) => 2,
            Error::Precondition(_)
            | Error::Domain(_)
            | Error::Separation { .. }
            | Error::RankDeficient { .. }
            | Error::Stratum { .. }
            | Error::Estimate(_) => 3,
            Error::NoConvergence { .. } | Error::NonFinite { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
