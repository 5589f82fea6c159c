//! Crate-wide error type. Variants are grouped by the exit-code class the
//! CLI maps them to: usage (1), data (2), numerical (3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing required CSV column `{0}`")]
    MissingColumn(String),

    #[error("only {available} zones qualify (appear in both AM and PM trips), {requested} requested")]
    NotEnoughZones { requested: usize, available: usize },

    #[error("duplicate zone id {0} in zone list")]
    DuplicateZone(u32),

    #[error("{0}")]
    InvalidData(String),

    #[error("cost matrix contains a non-finite entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),

    #[error("brute-force matching refused for n = {0} (limit 8)")]
    BruteForceTooLarge(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 for data problems, 3 for
    /// numerical failures. Usage errors (1) are produced by argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::NonFiniteCost(..) => 3,
            _ => 2,
        }
    }
}
