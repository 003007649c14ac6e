//! Dynamic affine (compound autoregressive) machinery.
//!
//! A model is described by its one-step Laplace exponent `a(u)` and either the
//! unconditional log-Laplace `c(u)` or the one-step intercept `b(u) = c(u) - c(a(u))`:
//!
//! ```text
//! log E[exp(-u'Y_{t+1}) | Y_t = y] = -a(u)'y + b(u)
//! log E[exp(-u'Y_{t+h}) | Y_t = y] = -a∘h(u)'y + c(u) - c(a∘h(u))
//! ```
//!
//! `grad_a0` is the matrix `M = da'/du(0)` so that `E[Y_{t+1} | y] = M y + (I - M) mu`
//! with `mu = -grad_c0` the stationary mean.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FredError, Result};
use crate::linalg::{self, mat_pow};
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// Vector-valued exponent `u -> a(u)`.
pub type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Scalar function of the argument.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Domain predicate on the argument.
pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Finite-difference step for Hessians at zero.
pub const HESSIAN_STEP: f64 = 1e-4;

/// How the constant part of the log-Laplace transform is supplied.
#[derive(Clone)]
pub enum Intercept {
    /// Unconditional log-Laplace `c(u)`.
    Unconditional(ScalarFn),
    /// One-step intercept `b(u)`; `c` is implied.
    OneStep(ScalarFn),
}

/// A dynamic affine model.
#[derive(Clone)]
pub struct AffineModel {
    name: String,
    dim: usize,
    a: VecFn,
    intercept: Intercept,
    grad_a0: DMatrix<f64>,
    grad_c0: DVector<f64>,
    domain: DomainFn,
}

impl fmt::Debug for AffineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("grad_a0", &self.grad_a0)
            .field("grad_c0", &self.grad_c0)
            .finish()
    }
}

/// Builder input for [`AffineModel::new`].
pub struct AffineSpec {
    /// Label used in error messages.
    pub name: String,
    /// State dimension.
    pub dim: usize,
    /// One-step exponent.
    pub a: VecFn,
    /// `c` or `b`.
    pub intercept: Intercept,
    /// Analytic `da'/du(0)`; finite differences when `None`.
    pub grad_a0: Option<DMatrix<f64>>,
    /// Analytic `dc/du(0)`; derived when `None`.
    pub grad_c0: Option<DVector<f64>>,
    /// Admissible arguments.
    pub domain: DomainFn,
}

/// Split of the FELD into state loading and constant.
#[derive(Clone, Debug, PartialEq)]
pub struct FeldComponents {
    /// `alpha(h,u)`.
    pub alpha_total: Vec<f64>,
    /// `beta(h,u)`.
    pub beta_total: f64,
    /// `alpha(h,k,u)`, k = 0..h-1.
    pub alpha_terms: Vec<Vec<f64>>,
    /// `beta(h,k,u)`, k = 0..h-1.
    pub beta_terms: Vec<f64>,
}

impl FeldComponents {
    /// Total `alpha' y + beta`.
    pub fn total(&self, y: &[f64]) -> f64 {
        dot(&self.alpha_total, y) + self.beta_total
    }

    /// Term `alpha_k' y + beta_k`.
    pub fn term(&self, k: usize, y: &[f64]) -> f64 {
        dot(&self.alpha_terms[k], y) + self.beta_terms[k]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl AffineModel {
    /// Validates unit-mass normalization, stationarity and the analytic gradient.
    pub fn new(spec: AffineSpec) -> Result<Self> {
        let n = spec.dim;
        if n == 0 {
            return Err(FredError::InvalidInput("affine model of dimension 0".into()));
        }
        let zero = vec![0.0; n];
        let a0 = (spec.a)(&zero);
        if a0.len() != n || a0.iter().any(|v| v.abs() > 1e-12) {
            return Err(FredError::InvalidInput(format!("{}: a(0) != 0", spec.name)));
        }
        let c0 = match &spec.intercept {
            Intercept::Unconditional(c) | Intercept::OneStep(c) => c(&zero),
        };
        if c0.abs() > 1e-12 {
            return Err(FredError::InvalidInput(format!("{}: intercept at 0 is {c0}", spec.name)));
        }
        let a_fn = spec.a.clone();
        let fd = linalg::jacobian(|u| a_fn(u), &zero, 1e-6).transpose();
        let grad_a0 = match spec.grad_a0 {
            Some(g) => {
                let gap = (&g - &fd).abs().max();
                if gap > 1e-6 {
                    return Err(FredError::InvalidInput(format!(
                        "{}: analytic grad_a0 differs from finite differences by {gap:e}",
                        spec.name
                    )));
                }
                g
            }
            None => fd,
        };
        let rho = linalg::spectral_radius(&grad_a0);
        if rho >= 1.0 {
            return Err(FredError::param("spectral_radius", rho, "grad_a0 must have spectral radius < 1"));
        }
        let grad_c0 = match (spec.grad_c0, &spec.intercept) {
            (Some(g), _) => g,
            (None, Intercept::Unconditional(c)) => {
                let c = c.clone();
                DVector::from_vec(linalg::gradient(|u| c(u), &zero, 1e-6))
            }
            (None, Intercept::OneStep(b)) => {
                let b = b.clone();
                let gb = DVector::from_vec(linalg::gradient(|u| b(u), &zero, 1e-6));
                let i_m = DMatrix::identity(n, n) - &grad_a0;
                let mu = i_m
                    .lu()
                    .solve(&(-gb))
                    .ok_or_else(|| FredError::LinearAlgebra("I - grad_a0 singular".into()))?;
                -mu
            }
        };
        Ok(AffineModel {
            name: spec.name,
            dim: n,
            a: spec.a,
            intercept: spec.intercept,
            grad_a0,
            grad_c0,
            domain: spec.domain,
        })
    }

    /// Model label.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `M = da'/du(0)`.
    pub fn grad_a0(&self) -> &DMatrix<f64> {
        &self.grad_a0
    }

    /// `dc/du(0)`.
    pub fn grad_c0(&self) -> &DVector<f64> {
        &self.grad_c0
    }

    /// Stationary mean `-dc/du(0)`.
    pub fn stationary_mean(&self) -> DVector<f64> {
        -&self.grad_c0
    }

    /// One-step exponent `a(u)`.
    pub fn a(&self, u: &[f64]) -> Vec<f64> {
        (self.a)(u)
    }

    /// One-step intercept `b(u) = c(u) - c(a(u))`.
    pub fn b(&self, u: &[f64]) -> f64 {
        match &self.intercept {
            Intercept::OneStep(b) => b(u),
            Intercept::Unconditional(c) => c(u) - c(&(self.a)(u)),
        }
    }

    /// Whether `u` is admissible.
    pub fn in_domain(&self, u: &[f64]) -> bool {
        u.len() == self.dim && u.iter().all(|v| v.is_finite()) && (self.domain)(u)
    }

    fn check_arg(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(FredError::InvalidInput(format!(
                "{}: argument has length {}, expected {}",
                self.name,
                u.len(),
                self.dim
            )));
        }
        if !self.in_domain(u) {
            return Err(FredError::Domain(format!("{}: u = {u:?}", self.name)));
        }
        Ok(())
    }

    /// All compounds `a∘j(u)` for j = 0..=h.
    pub fn compound_path(&self, u: &[f64], h: usize) -> Result<Vec<Vec<f64>>> {
        self.check_arg(u)?;
        let mut out = Vec::with_capacity(h + 1);
        out.push(u.to_vec());
        for step in 1..=h {
            let next = (self.a)(&out[step - 1]);
            if !self.in_domain(&next) {
                return Err(FredError::Domain(format!(
                    "{}: compound step {step} left the domain ({next:?})",
                    self.name
                )));
            }
            out.push(next);
        }
        Ok(out)
    }

    /// `a∘h(u)`.
    pub fn compound_a(&self, u: &[f64], h: usize) -> Result<Vec<f64>> {
        Ok(self.compound_path(u, h)?.pop().expect("path is nonempty"))
    }

    /// `c(u) - c(a∘h(u))` given the compound path.
    fn intercept_sum(&self, path: &[Vec<f64>], h: usize) -> f64 {
        match &self.intercept {
            Intercept::Unconditional(c) => c(&path[0]) - c(&path[h]),
            Intercept::OneStep(b) => (0..h).map(|j| b(&path[j])).sum(),
        }
    }

    /// `c(a∘j(u)) - c(a∘(j+1)(u)) = b(a∘j(u))`.
    fn intercept_step(&self, path: &[Vec<f64>], j: usize) -> f64 {
        match &self.intercept {
            Intercept::Unconditional(c) => c(&path[j]) - c(&path[j + 1]),
            Intercept::OneStep(b) => b(&path[j]),
        }
    }

    /// `log E[exp(-u'Y_{t+h}) | Y_t = y]`.
    pub fn conditional_log_laplace(&self, u: &[f64], h: usize, y: &[f64]) -> Result<f64> {
        self.check_state(y)?;
        let path = self.compound_path(u, h)?;
        Ok(-dot(&path[h], y) + self.intercept_sum(&path, h))
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(FredError::InvalidInput(format!(
                "{}: state has length {}, expected {}",
                self.name,
                y.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `E[Y_{t+h} | Y_t = y] = mu + M^h (y - mu)`.
    pub fn conditional_mean(&self, y: &[f64], h: usize) -> Vec<f64> {
        let mu = self.stationary_mean();
        let dev = linalg::dvec(y) - &mu;
        (mu + mat_pow(&self.grad_a0, h) * dev).as_slice().to_vec()
    }

    /// Constant part of the conditional mean, `(I - M^j) mu`.
    fn mean_intercept(&self, j: usize) -> DVector<f64> {
        let mu = self.stationary_mean();
        &mu - mat_pow(&self.grad_a0, j) * &mu
    }

    /// State loadings and constants of the FELD total and its terms.
    pub fn feld_components(&self, u: &[f64], h: usize) -> Result<FeldComponents> {
        if h == 0 {
            return Err(FredError::Horizon("FELD needs h >= 1".into()));
        }
        let path = self.compound_path(u, h)?;
        let pows: Vec<DMatrix<f64>> = (0..=h).map(|j| mat_pow(&self.grad_a0, j)).collect();
        let intercepts: Vec<DVector<f64>> = (0..=h).map(|j| self.mean_intercept(j)).collect();
        let uv = linalg::dvec(u);
        let alpha_total = pows[h].transpose() * &uv - linalg::dvec(&path[h]);
        let beta_total = uv.dot(&intercepts[h]) + self.intercept_sum(&path, h);
        let mut alpha_terms = Vec::with_capacity(h);
        let mut beta_terms = Vec::with_capacity(h);
        for k in 0..h {
            let near = linalg::dvec(&path[h - k - 1]);
            let far = linalg::dvec(&path[h - k]);
            let alpha = pows[k + 1].transpose() * &near - pows[k].transpose() * &far;
            let beta = near.dot(&intercepts[k + 1]) - far.dot(&intercepts[k])
                + self.intercept_step(&path, h - k - 1);
            alpha_terms.push(alpha.as_slice().to_vec());
            beta_terms.push(beta);
        }
        Ok(FeldComponents {
            alpha_total: alpha_total.as_slice().to_vec(),
            beta_total,
            alpha_terms,
            beta_terms,
        })
    }

    /// FELD table at `(u, y)` for the given horizons.
    pub fn feld_table(&self, u: &[f64], y: &[f64], horizons: &[usize]) -> Result<DecompositionTable> {
        self.check_state(y)?;
        build_table(Kind::Feld, Argument::Laplace(u.to_vec()), y.to_vec(), horizons, IDENTITY_TOL, |h| {
            let comp = self.feld_components(u, h)?;
            let terms = (0..h).map(|k| comp.term(k, y)).collect();
            Ok((terms, comp.total(y)))
        })
    }

    /// Hessian at 0 of `a_j`.
    pub fn hessian_a(&self, j: usize) -> DMatrix<f64> {
        let zero = vec![0.0; self.dim];
        linalg::hessian(|u| (self.a)(u)[j], &zero, HESSIAN_STEP)
    }

    /// Hessian at 0 of `b`.
    pub fn hessian_b(&self) -> DMatrix<f64> {
        let zero = vec![0.0; self.dim];
        linalg::hessian(|u| self.b(u), &zero, HESSIAN_STEP)
    }

    /// One-step conditional variance `V(Y_{t+1} | Y_t = x) = -sum_j x_j H_{a_j} + H_b`.
    pub fn one_step_variance(&self, x: &[f64]) -> DMatrix<f64> {
        let mut v = self.hessian_b();
        for (j, xj) in x.iter().enumerate() {
            v -= self.hessian_a(j) * *xj;
        }
        (&v + v.transpose()) * 0.5
    }

    /// FEVD term `E{ V[E(Y_{t+h}|I_{t+k+1}) | I_{t+k}] | Y_t = y }`.
    pub fn fevd_term(&self, y: &[f64], h: usize, k: usize) -> Result<DMatrix<f64>> {
        self.check_state(y)?;
        if k >= h {
            return Err(FredError::Horizon(format!("FEVD term k={k} needs k < h={h}")));
        }
        let mk = self.conditional_mean(y, k);
        let v = self.one_step_variance(&mk);
        let p = mat_pow(&self.grad_a0, h - k - 1);
        let out = &p * v * p.transpose();
        let out = (&out + out.transpose()) * 0.5;
        let scale = out.abs().max().max(1.0);
        let min_eig = linalg::min_sym_eigenvalue(&out);
        if min_eig < -1e-8 * scale {
            return Err(FredError::LinearAlgebra(format!(
                "{}: FEVD term (k={k}, h={h}) has eigenvalue {min_eig:e}",
                self.name
            )));
        }
        Ok(out)
    }

    /// Total conditional variance `V(Y_{t+h} | Y_t = y)` as the Hessian of the
    /// conditional log-Laplace transform at zero.
    pub fn conditional_variance(&self, y: &[f64], h: usize) -> Result<DMatrix<f64>> {
        self.check_state(y)?;
        let zero = vec![0.0; self.dim];
        let path = |u: &[f64]| -> f64 {
            let mut cur = u.to_vec();
            let mut acc = 0.0;
            for _ in 0..h {
                acc += self.b(&cur);
                cur = (self.a)(&cur);
            }
            acc - dot(&cur, y)
        };
        Ok(linalg::hessian(path, &zero, HESSIAN_STEP))
    }

    /// FEVD table for entry `(i, j)` of the conditional variance.
    ///
    /// Both sides come from finite-difference Hessians, so the identity is checked at
    /// `1e-6` relative instead of the closed-form tolerance.
    pub fn fevd_table(&self, y: &[f64], horizons: &[usize], entry: (usize, usize)) -> Result<DecompositionTable> {
        let (i, j) = entry;
        if i >= self.dim || j >= self.dim {
            return Err(FredError::InvalidInput(format!("variance entry ({i},{j}) out of range")));
        }
        build_table(Kind::Fevd, Argument::VarianceEntry(i, j), y.to_vec(), horizons, 1e-6, |h| {
            let terms = (0..h)
                .map(|k| self.fevd_term(y, h, k).map(|m| m[(i, j)]))
                .collect::<Result<Vec<_>>>()?;
            let total = self.conditional_variance(y, h)?[(i, j)];
            Ok((terms, total))
        })
    }

    /// Certainty-equivalent decomposition for univariate models.
    pub fn risk_premium_decomposition(&self, u: f64, y: f64, horizons: &[usize]) -> Result<RiskPremiumTable> {
        if self.dim != 1 {
            return Err(FredError::Unsupported("risk premium table needs a univariate model".into()));
        }
        if u <= 0.0 || !u.is_finite() {
            return Err(FredError::param("u", u, "risk aversion must be positive"));
        }
        let mut rows = Vec::new();
        for &h in horizons {
            let comp = self.feld_components(&[u], h)?;
            let ce = -self.conditional_log_laplace(&[u], h, &[y])? / u;
            let mean = self.conditional_mean(&[y], h)[0];
            let terms: Vec<f64> = (0..h).map(|k| comp.term(k, &[y]) / u).collect();
            let path = self.compound_path(&[u], h)?;
            let forward = (0..=h)
                .map(|k| {
                    // E[pi(u, h-k | Y_{t+k}) | Y_t]: the log-Laplace is affine in the state.
                    let mk = self.conditional_mean(&[y], k)[0];
                    -(-path[h - k][0] * mk + self.intercept_sum(&path, h - k)) / u
                })
                .collect();
            rows.push(RiskPremiumRow {
                h,
                certainty_equivalent: ce,
                conditional_mean: mean,
                premium: mean - ce,
                terms,
                forward,
            });
        }
        Ok(RiskPremiumTable { u, state: y, rows })
    }
}

/// One horizon of a [`RiskPremiumTable`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RiskPremiumRow {
    /// Horizon.
    pub h: usize,
    /// `pi(u,h|Y_t) = -(1/u) log Psi(u,h|Y_t)`.
    pub certainty_equivalent: f64,
    /// `E(Y_{t+h} | Y_t)`.
    pub conditional_mean: f64,
    /// `E(Y_{t+h}|Y_t) - pi(u,h|Y_t) = gamma(h)/u >= 0`.
    pub premium: f64,
    /// `E[pi(u,h-k-1|I_{t+k+1}) - pi(u,h-k|I_{t+k}) | I_t]`, k = 0..h-1.
    pub terms: Vec<f64>,
    /// Forward certainty equivalents `E[pi(u,h-k|I_{t+k}) | I_t]`, k = 0..h.
    pub forward: Vec<f64>,
}

/// Certainty equivalents, premia and their per-update split.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RiskPremiumTable {
    /// Risk aversion.
    pub u: f64,
    /// Conditioning state.
    pub state: f64,
    /// One row per horizon.
    pub rows: Vec<RiskPremiumRow>,
}
