use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel evaluated on the diagonal at {point:?}")]
    Diagonal { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("exponent invariant violated: {0}")]
    Exponent(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite form entry between quadrature points {p} and {q} (value {value})")]
    Assembly { p: usize, q: usize, value: f64 },

    #[error("negative off-diagonal generator entry L[{row}][{col}] = {value}")]
    NegativeRate { row: usize, col: usize, value: f64 },

    #[error("singular linear system at alpha = {alpha}")]
    Singular { alpha: f64 },

    #[error("system of size {size} exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("transition density mass defect {defect:e} exceeds tolerance {tolerance:e}")]
    MassDefect { defect: f64, tolerance: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("simulation aborted: {0}")]
    Simulation(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
