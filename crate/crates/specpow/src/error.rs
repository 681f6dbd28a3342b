use thiserror::Error;

/// Errors surfaced by the library. Divergence of an iteration is not an error;
/// it is reported through `IterationResult::diverged`.
#[derive(Debug, Error)]
pub enum SpecError {
    #[error("non-finite input")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("remez stalled after {exchanges} exchanges (residual {residual:e})")]
    RemezStalled { exchanges: usize, residual: f64 },
    #[error("denominator not positive on the fitting interval")]
    DenominatorSign,
    #[error("cushion insufficient: |gamma| = {gamma:e} exceeds {bound:e}")]
    CushionInsufficient { gamma: f64, bound: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("zero gradient")]
    ZeroGradient,
    #[error("invalid inner product: {0:e}")]
    InvalidInnerProduct(f64),
    #[error("fully truncated")]
    FullyTruncated,
    #[error("degenerate direction")]
    DegenerateDirection,
    #[error("non-positive curvature: {0:e}")]
    NonPositiveCurvature(f64),
    #[error("unsupported moment order {0}")]
    UnsupportedMomentOrder(usize),
    #[error("empty grid")]
    EmptyGrid,
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SpecError>;
