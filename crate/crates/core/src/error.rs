use thiserror::Error;

/// Errors produced anywhere in the modelling and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("matrix is not unitary (max |U^dagger U - I| = {defect:e})")]
    NotUnitary { defect: f64 },

    #[error("not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("control vector outside the domain [-1, 1]^4: {0:?}")]
    ControlOutOfDomain(Vec<f64>),

    #[error("matrix has an all-zero row or column, or a negative entry")]
    DegenerateMatrix,

    #[error("iterated proportional fitting did not converge in {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("model has not been trained")]
    ModelNotTrained,

    #[error("invalid network specification: {0}")]
    InvalidSpec(String),

    #[error("I/O error")]
    Io(#[from] std::io::Error),

    #[error("JSON error")]
    Json(#[from] serde_json::Error),

    #[error("malformed data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
