use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point {0:?} lies outside the domain")]
    OutOfDomain(Vec<f64>),

    #[error("points are not ordered: {x:?} is not <= {z:?}")]
    NotOrdered { x: Vec<f64>, z: Vec<f64> },

    #[error("point {0:?} is not a grid node")]
    OffGrid(Vec<f64>),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("memory budget exceeded: {required} values requested, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error(
        "contraction gate failed: 1.05 * Lambda ({lambda:.6}) * L ({lipschitz}) = {product:.6} >= 1"
    )]
    GateFailure {
        lambda: f64,
        lipschitz: f64,
        product: f64,
    },

    #[error("no convergence after {iterations} iterations (last update {last_update:e})")]
    NotConverged {
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error("residual stopped decreasing after {iterations} iterations (residual {residual:e})")]
    Stalled {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
