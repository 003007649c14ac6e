//! Monte-Carlo estimates of FRED totals and terms straight from their defining
//! conditional expectations.
//!
//! Models supply closed-form m-step conditional functionals `log E(Z_{t+h} | Y_{t+h-m})`,
//! so only the outer path is simulated.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FredError, Result};
use crate::sim::{mean_se, path_rng, Simulate};
use crate::table::{Argument, Kind};

/// Positive transform `Z` of the process.
#[derive(Clone, Debug, PartialEq)]
pub enum TransformSpec {
    /// `Z_{t+h} = exp(-u'Y_{t+h})`.
    Laplace(Vec<f64>),
    /// `Z_{t+h} = f(y, 1 | Y_{t+h-1})`, the one-step transition density at `y`.
    DensityAt(Vec<f64>),
    /// `Z_{t+h} = exp(-Tr(Gamma Y_{t+h}))`.
    MatrixLaplace(DMatrix<f64>),
}

impl TransformSpec {
    /// Decomposition this transform produces.
    pub fn kind(&self) -> Kind {
        match self {
            TransformSpec::DensityAt(_) => Kind::Fekd,
            _ => Kind::Feld,
        }
    }

    /// Number of periods by which `Z_{t+h}` is known before `t+h`.
    pub fn lag(&self) -> usize {
        match self {
            TransformSpec::DensityAt(_) => 1,
            _ => 0,
        }
    }

    /// Table argument tag.
    pub fn argument(&self) -> Argument {
        match self {
            TransformSpec::Laplace(u) => Argument::Laplace(u.clone()),
            TransformSpec::DensityAt(y) => Argument::DensityAt(y.clone()),
            TransformSpec::MatrixLaplace(g) => Argument::MatrixLaplace(crate::linalg::to_row_major(g)),
        }
    }
}

/// A model with closed-form conditional functionals of a transform.
pub trait Functional: Simulate {
    /// Rejects transforms outside the model domain.
    fn check_transform(&self, transform: &TransformSpec) -> Result<()>;

    /// `log E(Z_{t+h} | Y_{t+h-m} = state)` with `m` steps remaining.
    ///
    /// Laplace transforms accept `m >= 0` (m = 0 is `log Z` itself); densities need `m >= 1`.
    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64>;
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEstimate {
    /// Sample mean.
    pub value: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    /// Number of simulated paths.
    pub n_paths: usize,
    /// Base seed.
    pub seed: u64,
}

impl OracleEstimate {
    /// `|value - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let se = self.std_error.max(1e-300);
        (self.value - target).abs() / se
    }

    /// Whether `target` lies within `z` standard errors (an exact hit always passes).
    pub fn covers(&self, target: f64, z: f64) -> bool {
        (self.value - target).abs() <= z * self.std_error + 1e-12 * target.abs().max(1.0)
    }
}

fn check_common(n_paths: usize, h: usize) -> Result<()> {
    if n_paths < 100 {
        return Err(FredError::InvalidInput(format!("n_paths = {n_paths} < 100")));
    }
    if h == 0 {
        return Err(FredError::Horizon("h must be >= 1".into()));
    }
    Ok(())
}

fn estimate(values: Vec<Result<f64>>, n_paths: usize, seed: u64) -> Result<OracleEstimate> {
    let mut xs = Vec::with_capacity(values.len());
    for (p, v) in values.into_iter().enumerate() {
        let v = v?;
        if !v.is_finite() {
            return Err(FredError::PathDivergence { path: p, detail: format!("log-ratio {v}") });
        }
        xs.push(v);
    }
    let (value, std_error) = mean_se(&xs);
    Ok(OracleEstimate { value, std_error, n_paths, seed })
}

fn functional_on_path<M: Functional + ?Sized>(
    model: &M,
    transform: &TransformSpec,
    state: &[f64],
    m: usize,
    path: usize,
) -> Result<f64> {
    let v = model.log_functional(transform, state, m)?;
    if !v.is_finite() {
        return Err(FredError::PathDivergence {
            path,
            detail: "transform evaluates to zero (possible discrete atom)".into(),
        });
    }
    Ok(v)
}

/// Estimates `E{ log[E(Z_{t+h}|I_t) / Z_{t+h}] | Y_t = y0 }`.
pub fn fred_total_oracle<M: Functional + ?Sized>(
    model: &M,
    transform: &TransformSpec,
    y0: &[f64],
    h: usize,
    n_paths: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    check_common(n_paths, h)?;
    model.check_state(y0)?;
    model.check_transform(transform)?;
    let lag = transform.lag();
    let head = model.log_functional(transform, y0, h)?;
    let values: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut cur = y0.to_vec();
            for _ in 0..(h - lag) {
                cur = model.step(&cur, &mut rng);
            }
            let log_z = functional_on_path(model, transform, &cur, lag, p)?;
            Ok(head - log_z)
        })
        .collect();
    estimate(values, n_paths, seed)
}

/// Estimates `E{ log[E(Z_{t+h}|I_{t+k}) / E(Z_{t+h}|I_{t+k+1})] | Y_t = y0 }`.
pub fn fred_term_oracle<M: Functional + ?Sized>(
    model: &M,
    transform: &TransformSpec,
    y0: &[f64],
    h: usize,
    k: usize,
    n_paths: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    check_common(n_paths, h)?;
    model.check_state(y0)?;
    model.check_transform(transform)?;
    let lag = transform.lag();
    if k + 1 + lag > h {
        return Err(FredError::Horizon(format!("k={k} out of range for h={h} ({:?})", transform.kind())));
    }
    let values: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut cur = y0.to_vec();
            for _ in 0..k {
                cur = model.step(&cur, &mut rng);
            }
            let next = model.step(&cur, &mut rng);
            let a = functional_on_path(model, transform, &cur, h - k, p)?;
            let b = functional_on_path(model, transform, &next, h - k - 1, p)?;
            Ok(a - b)
        })
        .collect();
    estimate(values, n_paths, seed)
}

/// Estimates `E[f(Y_{t+h}) | Y_t = y0]` for an arbitrary real function.
pub fn mc_expectation<M, F>(model: &M, y0: &[f64], h: usize, n_paths: usize, seed: u64, f: F) -> Result<OracleEstimate>
where
    M: Simulate + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_common(n_paths, h)?;
    model.check_state(y0)?;
    let values: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut cur = y0.to_vec();
            for _ in 0..h {
                cur = model.step(&cur, &mut rng);
            }
            Ok(f(&cur))
        })
        .collect();
    estimate(values, n_paths, seed)
}

/// Estimates `E[ exp(log E(Z_{t+h} | Y_{t+1})) | Y_t = y0 ]`, the tower-property check of
/// a closed-form functional.
pub fn tower_oracle<M: Functional + ?Sized>(
    model: &M,
    transform: &TransformSpec,
    y0: &[f64],
    h: usize,
    n_paths: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    model.check_transform(transform)?;
    if h == 0 {
        return Err(FredError::Horizon("tower check needs h >= 1".into()));
    }
    mc_expectation(model, y0, 1, n_paths, seed, |s| {
        model.log_functional(transform, s, h - 1).map(f64::exp).unwrap_or(f64::NAN)
    })
}
