use thiserror::Error;

/// Crate-wide error type. Every variant renders as a single line so the CLI
/// can emit machine-parsable `error: <kind>: <detail>` messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("parameter: {0}")]
    Parameter(String),
    #[error("data: {0}")]
    Data(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cli: {0}")]
    Cli(String),
}

pub type Result<T> = std::result::Result<T, Error>;
