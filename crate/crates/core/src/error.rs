use thiserror::Error;

/// Errors surfaced by the solvers, the oracles and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("dimension {dim} is out of range for {function} (expected {expected})")]
    DimensionOutOfRange {
        function: String,
        dim: usize,
        expected: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is not in the differentiable set of {0}")]
    NotDifferentiable(String),

    #[error("could not draw a differentiable sample after {retries} retries (radius {radius:e})")]
    SamplingExhausted { retries: usize, radius: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
