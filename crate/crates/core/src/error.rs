use thiserror::Error;

/// Errors produced by the segmentation, control and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plane: normal ({0}, {1}, {2}) has zero length")]
    InvalidPlane(f64, f64, f64),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient points: need at least {required}, got {actual}")]
    InsufficientPoints { required: usize, actual: usize },

    #[error("lasso column {column} did not converge after {iterations} iterations (residual {residual:e})")]
    LassoNotConverged {
        column: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid cluster count K={k} for {rows} rows")]
    InvalidClusterCount { k: usize, rows: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
