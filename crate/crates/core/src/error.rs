use thiserror::Error;

#[derive(Debug, Error)]
pub enum DppError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("kernel does not define a DPP: {reason} (sup spectrum {sup_spectrum:.4})")]
    NonExistent { sup_spectrum: f64, reason: String },

    #[error("out of tabulated range: r = {r} exceeds grid maximum {max}")]
    OutOfTabulatedRange { r: f64, max: f64 },

    #[error("unsupported order {0}")]
    UnsupportedOrder(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator size {size} exceeds cap {cap}; {advice}")]
    CapExceeded { size: usize, cap: usize, advice: String },

    #[error("discretization too coarse: {0}")]
    Discretization(String),

    #[error("modes cap {cap} reached with only {captured:.6} of the spectral mass; raise modes_cap")]
    ModesCapExceeded { cap: usize, captured: f64 },

    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("malformed data at line {line}: {msg}")]
    MalformedData { line: usize, msg: String },

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DppError>;
