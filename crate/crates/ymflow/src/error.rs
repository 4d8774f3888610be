use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// ad_Cas is not a multiple of the identity; the full matrix is attached.
    #[error("algebra is not simple: ad_Cas is not scalar (best scalar {lambda}, residual {residual:e})")]
    NotSimple {
        lambda: f64,
        residual: f64,
        ad_cas: DMatrix<f64>,
    },

    #[error("matrix logarithm branch failure: eigenvalue angle {angle} too close to pi (refine grid)")]
    LogBranch { angle: f64 },

    #[error("fields are not gauge equivalent: path-independence residual {residual:e} exceeds {tolerance:e}")]
    NotGaugeEquivalent { residual: f64, tolerance: f64 },

    #[error("dyadic refinement diverged after {levels} levels: last bound {last_bound:e}, bounds {history:?}")]
    RefinementDiverged {
        levels: usize,
        last_bound: f64,
        history: Vec<f64>,
    },

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("blow-up at t = {t}: |field| = {magnitude:e}")]
    Blowup { t: f64, magnitude: f64 },

    #[error("enumeration budget of {budget} trees exceeded")]
    BudgetExceeded { budget: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
