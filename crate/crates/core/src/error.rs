use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("time {time} fs is not an integer multiple of the step {step} fs")]
    IncommensurateTime { time: f64, step: f64 },
    #[error("trace drifted by {drift:.3e} in one step (limit {limit:.1e})")]
    TraceDrift { drift: f64, limit: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("register of {qubits} qubits needs {required} bytes, budget is {budget} bytes")]
    MemoryBudget { qubits: usize, required: u128, budget: u128 },
    #[error("circuit text parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
