//! Parameter estimation, delta-method bands and the nonparametric FELD estimator.

pub mod binbar;
pub mod delta;
pub mod nbar;
pub mod nw;
pub mod optim;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{FredError, Result};
use crate::linalg::{min_sym_eigenvalue, to_row_major};

/// Fit diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Log-likelihood at the estimate (MLE).
    pub log_likelihood: Option<f64>,
    /// Objective value at the estimate (GMM: `T g'Wg`, OLS: residual sum of squares).
    pub objective: Option<f64>,
    /// Optimizer iterations.
    pub iterations: usize,
    /// Set only when the gradient norm is below tolerance.
    pub converged: bool,
    /// Gradient norm at the estimate.
    pub gradient_norm: Option<f64>,
    /// Method-specific extras.
    pub extra: BTreeMap<String, f64>,
}

/// Point estimates with covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    /// Method tag (`ols`, `mle`, `gmm`, ...).
    pub method: String,
    /// Parameter names.
    pub names: Vec<String>,
    /// Estimates.
    pub theta: Vec<f64>,
    /// Finite-sample covariance of the estimates.
    pub cov: DMatrix<f64>,
    /// `sqrt(diag(cov))`.
    pub std_errors: Vec<f64>,
    /// Fit diagnostics.
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    /// Symmetrizes `cov`, checks it is PSD within `1e-8` and derives standard errors.
    pub fn new(method: &str, names: &[&str], theta: Vec<f64>, cov: DMatrix<f64>, diagnostics: Diagnostics) -> Result<Self> {
        let p = theta.len();
        if names.len() != p || cov.shape() != (p, p) {
            return Err(FredError::InvalidInput("estimate, names and covariance sizes differ".into()));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let scale = cov.abs().max().max(1e-300);
        let min_eig = min_sym_eigenvalue(&cov);
        if !min_eig.is_finite() || min_eig < -1e-8 * scale.max(1.0) {
            return Err(FredError::Numerical(format!("{method}: covariance not PSD (min eigenvalue {min_eig:e})")));
        }
        let std_errors = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
        Ok(EstimationResult {
            method: method.to_string(),
            names: names.iter().map(|s| s.to_string()).collect(),
            theta,
            cov,
            std_errors,
            diagnostics,
        })
    }

    /// Estimate by name.
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.theta[i], self.std_errors[i]))
    }

    /// `{method, theta: {name: value}, se: {...}, cov: row-major, diagnostics}`.
    pub fn to_json(&self) -> serde_json::Value {
        let theta: serde_json::Map<_, _> =
            self.names.iter().zip(&self.theta).map(|(n, v)| (n.clone(), serde_json::json!(v))).collect();
        let se: serde_json::Map<_, _> =
            self.names.iter().zip(&self.std_errors).map(|(n, v)| (n.clone(), serde_json::json!(v))).collect();
        serde_json::json!({
            "method": self.method,
            "names": self.names,
            "theta": theta,
            "se": se,
            "cov": to_row_major(&self.cov),
            "diagnostics": self.diagnostics,
        })
    }

    /// Summary table `parameter,estimate,std_error`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["parameter", "estimate", "std_error"])?;
        for ((n, v), s) in self.names.iter().zip(&self.theta).zip(&self.std_errors) {
            wr.write_record([n.as_str(), &format!("{v:.6}"), &format!("{s:.6}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}
