//! Univariate negative binomial autoregression (NBAR).
//!
//! State space: `X_{t+1} | Y_t ~ gamma(delta + Y_t, scale c)`, `Y_{t+1} | X_{t+1} ~ Poisson(beta X_{t+1})`.
//! Only `rho = beta c` and `delta` are identified; the sampler uses `beta = 1, c = rho`.
//!
//! With `w = 1 - e^{-u}` and `rho_j = rho (1 - rho^j)/(1 - rho)`:
//!
//! ```text
//! log Psi(u, m | y) = y log(1 + rho_{m-1} w) - (delta + y) log(1 + rho_m w)
//! ```
//!
//! where `rho_{-1} = -1` continues the sequence so that `m = 0` gives `-u y`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::affine::{AffineModel, AffineSpec, FeldComponents, Intercept};
use crate::error::{FredError, Result};
use crate::models::inar::{check_count_state, poisson_draw};
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// Parameters `{rho, delta}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbarParams {
    /// `rho = beta c` in (0, 1).
    pub rho: f64,
    /// Gamma shape offset, `delta > 0`.
    pub delta: f64,
}

impl NbarParams {
    /// Validated constructor.
    pub fn new(rho: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(FredError::param("rho", rho, "must lie in (0,1)"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FredError::param("delta", delta, "must be positive"));
        }
        Ok(NbarParams { rho, delta })
    }

    /// From the unidentified pair `(beta, c)`.
    pub fn from_beta_c(beta: f64, c: f64, delta: f64) -> Result<Self> {
        if !(beta > 0.0 && c > 0.0) {
            return Err(FredError::InvalidInput("beta and c must be positive".into()));
        }
        Self::new(beta * c, delta)
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.rho, self.delta)
    }

    /// Stationary mean `delta rho / (1 - rho)`.
    pub fn mean(&self) -> f64 {
        self.delta * self.rho / (1.0 - self.rho)
    }

    /// Stationary variance of the negative binomial marginal.
    pub fn variance(&self) -> f64 {
        let q = self.rho / (1.0 - self.rho);
        self.delta * q * (1.0 + q)
    }

    /// `beta c_j = rho (1 - rho^j)/(1 - rho)`, extended by `beta c_{-1} = -1`.
    pub fn beta_c(&self, j: i64) -> f64 {
        if j < 0 {
            return -1.0;
        }
        self.rho * (1.0 - self.rho.powi(j as i32)) / (1.0 - self.rho)
    }

    fn w(u: f64) -> f64 {
        -(-u).exp_m1()
    }

    /// `A_j = a∘j(u) = log(1 + rho_j w) - log(1 + rho_{j-1} w)`.
    pub fn compound_a(&self, u: f64, j: usize) -> f64 {
        let w = Self::w(u);
        (1.0 + self.beta_c(j as i64) * w).ln() - (1.0 + self.beta_c(j as i64 - 1) * w).ln()
    }

    /// `log E[exp(-u Y_{t+m}) | Y_t = y]`.
    pub fn log_laplace(&self, u: f64, m: usize, y: f64) -> f64 {
        let w = Self::w(u);
        y * (1.0 + self.beta_c(m as i64 - 1) * w).ln() - (self.delta + y) * (1.0 + self.beta_c(m as i64) * w).ln()
    }

    /// `E[Y_{t+h} | Y_t = y] = rho^h y + mu (1 - rho^h)`.
    pub fn conditional_mean(&self, y: f64, h: usize) -> f64 {
        let rh = self.rho.powi(h as i32);
        rh * y + self.mean() * (1.0 - rh)
    }

    /// Transition log-mass `log P(Y_{t+1} = y | Y_t = x)` (negative binomial).
    pub fn log_transition(&self, x: u64, y: u64) -> f64 {
        let r = self.delta + x as f64;
        let yf = y as f64;
        ln_gamma(r + yf) - ln_gamma(r) - ln_gamma(yf + 1.0) + yf * self.rho.ln() - (r + yf) * self.rho.ln_1p()
    }

    /// Generic affine representation.
    pub fn affine(&self) -> Result<AffineModel> {
        let NbarParams { rho, delta } = *self;
        let q = rho / (1.0 - rho);
        AffineModel::new(AffineSpec {
            name: "nbar".into(),
            dim: 1,
            a: Arc::new(move |u: &[f64]| vec![(1.0 + rho * Self::w(u[0])).ln()]),
            intercept: Intercept::Unconditional(Arc::new(move |u: &[f64]| -delta * (1.0 + q * Self::w(u[0])).ln())),
            grad_a0: Some(DMatrix::from_element(1, 1, rho)),
            grad_c0: Some(DVector::from_element(1, -delta * q)),
            domain: Arc::new(move |u: &[f64]| 1.0 + q * Self::w(u[0]) > 0.0),
        })
    }

    fn check_u(u: f64) -> Result<()> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(FredError::param("u", u, "NBAR FELD needs u > 0"));
        }
        Ok(())
    }

    /// Closed-form FELD loadings and constants.
    pub fn feld_components(&self, u: f64, h: usize) -> Result<FeldComponents> {
        Self::check_u(u)?;
        if h == 0 {
            return Err(FredError::Horizon("FELD needs h >= 1".into()));
        }
        let (rho, mu, w) = (self.rho, self.mean(), Self::w(u));
        let pw = |j: usize| rho.powi(j as i32);
        let a = |j: usize| self.compound_a(u, j);
        let alpha_total = u * pw(h) - a(h);
        let beta_total = mu * u * (1.0 - pw(h)) - self.delta * (1.0 + self.beta_c(h as i64) * w).ln();
        let mut alpha_terms = Vec::with_capacity(h);
        let mut beta_terms = Vec::with_capacity(h);
        for k in 0..h {
            let (near, far) = (a(h - k - 1), a(h - k));
            alpha_terms.push(vec![pw(k + 1) * near - pw(k) * far]);
            beta_terms.push(mu * (near * (1.0 - pw(k + 1)) - far * (1.0 - pw(k))) - self.delta * far);
        }
        Ok(FeldComponents { alpha_total: vec![alpha_total], beta_total, alpha_terms, beta_terms })
    }

    /// State loading of the FELD total,
    /// `u rho^h + log(1 + rho_{h-1} w) - log(1 + rho_h w)`.
    pub fn marginal_effect(&self, u: f64, h: usize) -> Result<f64> {
        Self::check_u(u)?;
        Ok(u * self.rho.powi(h as i32) - self.compound_a(u, h))
    }

    /// FELD table at `(u, Y_t = y0)`.
    pub fn feld_table(&self, u: f64, y0: f64, horizons: &[usize]) -> Result<DecompositionTable> {
        check_count_state("nbar", &[y0], 1)?;
        build_table(Kind::Feld, Argument::Laplace(vec![u]), vec![y0], horizons, IDENTITY_TOL, |h| {
            let c = self.feld_components(u, h)?;
            Ok(((0..h).map(|k| c.term(k, &[y0])).collect(), c.total(&[y0])))
        })
    }
}

impl Simulate for NbarParams {
    fn model_id(&self) -> &'static str {
        "nbar"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        check_count_state("nbar", y, 1)
    }

    /// Latent intensity `X_{t+1} ~ gamma(delta + Y_t, rho)`, then `Y_{t+1} ~ Poisson(X_{t+1})`.
    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let x = Gamma::new(self.delta + state[0], self.rho).expect("positive shape").sample(rng);
        (vec![poisson_draw(x, rng) as f64], vec![x])
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let x = Gamma::new(self.delta, self.rho / (1.0 - self.rho)).ok()?.sample(rng);
        Some(vec![poisson_draw(x, rng) as f64])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![self.mean().round()]
    }
}

impl Functional for NbarParams {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::Laplace(u) if u.len() == 1 && u[0] >= 0.0 => Ok(()),
            _ => Err(FredError::Unsupported("NBAR oracle supports scalar Laplace arguments u >= 0".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::Laplace(u) => Ok(self.log_laplace(u[0], m, state[0])),
            _ => Err(FredError::Unsupported("NBAR oracle supports scalar Laplace arguments".into())),
        }
    }
}
