//! Delta-method bands for FELD terms of affine models.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::affine::AffineModel;
use crate::error::{FredError, Result};
use crate::linalg::{jacobian, min_sym_eigenvalue};

/// Band for one horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandRow {
    /// Horizon.
    pub h: usize,
    /// Point estimate of `gamma(h)`.
    pub total: f64,
    /// Variance of the total estimate.
    pub total_var: f64,
    /// Lower band limit.
    pub lower: f64,
    /// Upper band limit.
    pub upper: f64,
    /// Point estimates of `gamma(k,h)`, `k = 0..h-1`.
    pub terms: Vec<f64>,
    /// Variances of the term estimates.
    pub term_vars: Vec<f64>,
}

/// Delta-method output: one row per horizon plus the full term covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaBand {
    /// Confidence level.
    pub level: f64,
    /// Per-horizon bands.
    pub rows: Vec<BandRow>,
    /// Covariance of the stacked terms (horizons in order, `k` inner).
    pub term_cov: DMatrix<f64>,
}

/// Propagates the asymptotic covariance `v` of `sqrt(T)(theta_hat - theta)` to the FELD
/// terms `gamma(k,h|u,y0)`: `Omega = J V J' / T` with `J` by central differences.
pub fn delta_band<B>(
    theta: &[f64],
    v: &DMatrix<f64>,
    t_obs: usize,
    builder: B,
    u: &[f64],
    y0: &[f64],
    horizons: &[usize],
    level: f64,
) -> Result<DeltaBand>
where
    B: Fn(&[f64]) -> Result<AffineModel>,
{
    let p = theta.len();
    if v.shape() != (p, p) {
        return Err(FredError::InvalidInput("covariance shape does not match theta".into()));
    }
    if t_obs == 0 {
        return Err(FredError::InvalidInput("sample size must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(FredError::param("level", level, "must lie in (0,1)"));
    }
    let vs = (v + v.transpose()) * 0.5;
    if min_sym_eigenvalue(&vs) < -1e-8 * vs.abs().max().max(1.0) {
        return Err(FredError::LinearAlgebra("parameter covariance is not PSD".into()));
    }
    if horizons.iter().any(|h| *h == 0) {
        return Err(FredError::Horizon("horizons must be >= 1".into()));
    }

    let stacked = |th: &[f64]| -> Result<Vec<f64>> {
        let model = builder(th)?;
        let mut out = Vec::new();
        for &h in horizons {
            let c = model.feld_components(u, h)?;
            out.extend((0..h).map(|k| c.term(k, y0)));
        }
        Ok(out)
    };
    let point = stacked(theta)?;
    let n = point.len();
    let j = jacobian(|th: &[f64]| stacked(th).unwrap_or_else(|_| vec![f64::NAN; n]), theta, 1e-6);
    if j.iter().any(|x| !x.is_finite()) {
        return Err(FredError::Numerical("terms not differentiable near theta (domain boundary)".into()));
    }
    let omega = &j * &vs * j.transpose() / t_obs as f64;
    let omega = (&omega + omega.transpose()) * 0.5;
    if min_sym_eigenvalue(&omega) < -1e-8 * omega.abs().max().max(1e-300) {
        return Err(FredError::Numerical("propagated covariance is not PSD".into()));
    }

    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
    let mut rows = Vec::with_capacity(horizons.len());
    let mut offset = 0;
    for &h in horizons {
        let terms = point[offset..offset + h].to_vec();
        let term_vars: Vec<f64> = (0..h).map(|k| omega[(offset + k, offset + k)].max(0.0)).collect();
        let total: f64 = terms.iter().sum();
        let block = omega.view((offset, offset), (h, h));
        let total_var = block.sum().max(0.0);
        let half = z * total_var.sqrt();
        rows.push(BandRow { h, total, total_var, lower: total - half, upper: total + half, terms, term_vars });
        offset += h;
    }
    Ok(DeltaBand { level, rows, term_cov: omega })
}
