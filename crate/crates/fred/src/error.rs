//! Error type shared by every engine in the crate.

use thiserror::Error;

/// Failures raised by model construction, decomposition engines, oracles and estimators.
#[derive(Debug, Error)]
pub enum FredError {
    /// A model or estimator parameter is outside its admissible region.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        /// Parameter name as it appears in the JSON schema.
        name: String,
        /// Offending value.
        value: f64,
        /// Which constraint failed.
        reason: String,
    },

    /// A transform argument (u, y or Gamma) is outside the model domain.
    #[error("argument outside model domain: {0}")]
    Domain(String),

    /// Horizon or update index out of range for the requested decomposition.
    #[error("invalid horizon/index: {0}")]
    Horizon(String),

    /// A decomposition table entry is NaN or infinite.
    #[error("non-finite value at (k={k}, h={h})")]
    NonFinite {
        /// Update index.
        k: usize,
        /// Horizon.
        h: usize,
    },

    /// A total does not match the sum of its terms.
    #[error("table identity violated at h={h}: residual {residual:e}")]
    Residual {
        /// Horizon.
        h: usize,
        /// Absolute residual.
        residual: f64,
    },

    /// Shares requested for a horizon whose total is zero.
    #[error("zero total at h={0}, shares undefined")]
    ZeroTotal(usize),

    /// The model cannot produce the requested decomposition.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Generic contract violation on inputs (shape mismatch, empty data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Matrix factorization failed or a matrix was not PD/PSD.
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    /// A Monte-Carlo path produced a zero or non-finite transform.
    #[error("path {path}: transform is zero or non-finite ({detail})")]
    PathDivergence {
        /// Index of the offending path.
        path: usize,
        /// Description.
        detail: String,
    },

    /// Quadrature failed to reach the requested accuracy.
    #[error("quadrature did not converge: error estimate {estimate:e}")]
    Quadrature {
        /// Last error estimate.
        estimate: f64,
    },

    /// An optimizer did not converge or a Hessian was not invertible.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Moment conditions do not identify the parameters.
    #[error("rank deficient moment Jacobian (rank {rank}); dependent quadruplets: {dependent:?}")]
    RankDeficient {
        /// Numerical rank found.
        rank: usize,
        /// Indices of quadruplets that add no rank.
        dependent: Vec<usize>,
    },

    /// Malformed data file.
    #[error("data error at row {row}: {reason}")]
    Data {
        /// One-based data row (header excluded).
        row: usize,
        /// Description.
        reason: String,
    },

    /// I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// JSON failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FredError {
    /// Convenience constructor for [`FredError::InvalidParameter`].
    pub fn param(name: &str, value: f64, reason: impl Into<String>) -> Self {
        FredError::InvalidParameter {
            name: name.to_string(),
            value,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            FredError::LinearAlgebra(_)
                | FredError::Quadrature { .. }
                | FredError::Numerical(_)
                | FredError::PathDivergence { .. }
                | FredError::Residual { .. }
                | FredError::NonFinite { .. }
        )
    }
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, FredError>;
