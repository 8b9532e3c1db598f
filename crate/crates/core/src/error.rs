use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("joint table has {cells} cells, above the limit of {limit}; use pairwise marginals instead")]
    TableTooLarge { cells: u128, limit: u128 },

    #[error("cannot rescale component {component}, variable {variable}: all mass on the missing category")]
    Rescale { component: usize, variable: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("preprocessing produced an empty dataset: {0}")]
    EmptyAfterFilter(String),

    #[error("model document error: {0}")]
    Model(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
