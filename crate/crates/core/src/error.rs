use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: String, row: usize },

    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),

    #[error("invalid dataset:\n  {}", .0.join("\n  "))]
    InvalidDataset(Vec<String>),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("empty interval: lo = {lo}, hi = {hi}")]
    Interval { lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chain diverged at iteration {iteration}: {detail}")]
    ChainDivergence { iteration: usize, detail: String },

    #[error("state invariants violated at iteration {iteration}:\n  {}", .failures.join("\n  "))]
    Invariant { iteration: usize, failures: Vec<String> },

    #[error("lambda calibration failed: target {target}, nearest achieved {achieved}")]
    Calibration { target: f64, achieved: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
