//! Univariate count estimators: NBAR by OLS and by maximum likelihood, INAR by
//! conditional least squares.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::optim::{newton_polish, NelderMead};
use super::{Diagnostics, EstimationResult};
use crate::error::{FredError, Result};
use crate::linalg::spd_inverse;
use crate::models::nbar::NbarParams;

fn check_counts(series: &[f64], min_len: usize) -> Result<()> {
    if series.len() < min_len {
        return Err(FredError::InvalidInput(format!("need at least {min_len} observations, got {}", series.len())));
    }
    for (i, v) in series.iter().enumerate() {
        if !(*v >= 0.0) || v.fract() != 0.0 {
            return Err(FredError::Data { row: i + 1, reason: format!("{v} is not a nonnegative integer") });
        }
    }
    Ok(())
}

/// Regression of `Y_t` on `(1, Y_{t-1})` with HC0 covariance: `(coef, cov, residuals)`.
pub(crate) fn ols_ar1(series: &[f64]) -> Result<(Vector2<f64>, Matrix2<f64>, Vec<f64>)> {
    let x: Vec<f64> = series[..series.len() - 1].to_vec();
    let y: Vec<f64> = series[1..].to_vec();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    if x.iter().all(|v| (v - mx).abs() < 1e-12) {
        return Err(FredError::InvalidInput("lagged regressor is constant".into()));
    }
    let mut xtx = Matrix2::zeros();
    let mut xty = Vector2::zeros();
    for (xi, yi) in x.iter().zip(&y) {
        let r = Vector2::new(1.0, *xi);
        xtx += r * r.transpose();
        xty += r * *yi;
    }
    let inv = xtx.try_inverse().ok_or_else(|| FredError::LinearAlgebra("X'X singular".into()))?;
    let coef = inv * xty;
    let mut meat = Matrix2::zeros();
    let mut resid = Vec::with_capacity(y.len());
    for (xi, yi) in x.iter().zip(&y) {
        let r = Vector2::new(1.0, *xi);
        let e = yi - coef.dot(&r);
        meat += r * r.transpose() * (e * e);
        resid.push(e);
    }
    Ok((coef, inv * meat * inv, resid))
}

/// OLS of `Y_t` on `Y_{t-1}`: `rho = slope`, `delta = intercept / slope` (delta method SE).
pub fn nbar_ols(series: &[f64]) -> Result<EstimationResult> {
    check_counts(series, 30)?;
    let (coef, cov, resid) = ols_ar1(series)?;
    let (c, rho) = (coef[0], coef[1]);
    if rho.abs() < 1e-12 {
        return Err(FredError::Numerical("slope is zero; delta = intercept/slope undefined".into()));
    }
    let delta = c / rho;
    // d(rho, delta)/d(c, rho)
    let j = Matrix2::new(0.0, 1.0, 1.0 / rho, -c / (rho * rho));
    let v = j * cov * j.transpose();
    let mut diag = Diagnostics {
        objective: Some(resid.iter().map(|e| e * e).sum()),
        converged: true,
        ..Default::default()
    };
    diag.extra.insert("intercept".into(), c);
    diag.extra.insert("intercept_se".into(), cov[(0, 0)].sqrt());
    EstimationResult::new("ols", &["rho", "delta"], vec![rho, delta], DMatrix::from_iterator(2, 2, v.iter().copied()), diag)
}

/// `sum_t log P(Y_t | Y_{t-1}; rho, delta)`.
pub fn nbar_log_likelihood(series: &[f64], rho: f64, delta: f64) -> Result<f64> {
    let p = NbarParams::new(rho, delta)?;
    Ok(series.windows(2).map(|w| p.log_transition(w[0] as u64, w[1] as u64)).sum())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximum likelihood on `(logit rho, log delta)`; covariance is the inverse Hessian of
/// the negative log-likelihood in `(rho, delta)`.
pub fn nbar_mle(series: &[f64], init: (f64, f64)) -> Result<EstimationResult> {
    check_counts(series, 30)?;
    NbarParams::new(init.0, init.1)?;
    let t = (series.len() - 1) as f64;
    let nll_natural = |th: &[f64]| -> f64 {
        match nbar_log_likelihood(series, th[0], th[1]) {
            Ok(v) => -v / t,
            Err(_) => f64::INFINITY,
        }
    };
    let nll_free = |z: &[f64]| nll_natural(&[expit(z[0]), z[1].exp()]);
    let z0 = [logit(init.0), init.1.ln()];
    let start_value = nll_free(&z0);
    let nm = NelderMead::default().minimize(nll_free, &z0);
    let (z, _) = newton_polish(nll_free, &nm.x, 1e-5, 20);
    let theta = vec![expit(z[0]), z[1].exp()];
    let value = nll_natural(&theta);
    if value > start_value {
        return Err(FredError::Numerical("likelihood decreased from the initial value".into()));
    }
    let grad = crate::linalg::gradient(nll_natural, &theta, 1e-6);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let at_boundary = theta[0] < 1e-6 || theta[0] > 1.0 - 1e-6 || theta[1] < 1e-8 || theta[1] > 1e8;
    let hess = crate::linalg::hessian(nll_natural, &theta, 1e-5) * t;
    let hess = (&hess + hess.transpose()) * 0.5;
    let cov = spd_inverse(&hess, "negative log-likelihood Hessian")
        .map_err(|_| FredError::Numerical("log-likelihood Hessian is not positive definite".into()))?;
    let diag = Diagnostics {
        log_likelihood: Some(-value * t),
        objective: Some(value * t),
        iterations: nm.iterations,
        converged: nm.converged && !at_boundary && grad_norm < 1e-6,
        gradient_norm: Some(grad_norm),
        ..Default::default()
    };
    EstimationResult::new("mle", &["rho", "delta"], theta, cov, diag)
}

/// Conditional least squares for the INAR thinning probability with `lambda` known:
/// `p = sum Y_{t-1}(Y_t - lambda) / sum Y_{t-1}^2`, sandwich variance.
pub fn inar_cls_p(series: &[f64], lambda: f64) -> Result<EstimationResult> {
    check_counts(series, 30)?;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for w in series.windows(2) {
        sxx += w[0] * w[0];
        sxy += w[0] * (w[1] - lambda);
    }
    if sxx <= 0.0 {
        return Err(FredError::InvalidInput("all lagged counts are zero".into()));
    }
    let p = sxy / sxx;
    let meat: f64 = series.windows(2).map(|w| (w[0] * (w[1] - lambda - p * w[0])).powi(2)).sum();
    let var = meat / (sxx * sxx);
    let diag = Diagnostics { converged: true, ..Default::default() };
    EstimationResult::new("cls", &["p"], vec![p], DMatrix::from_element(1, 1, var), diag)
}
