//! INAR(1): `Y_t = B_t(p) ∘ Y_{t-1} + eps_t`, binomial thinning plus Poisson(lambda) arrivals.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, AffineSpec, FeldComponents, Intercept};
use crate::error::{FredError, Result};
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// Parameters `{p, lambda}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InarParams {
    /// Survival probability, `0 <= p < 1`.
    pub p: f64,
    /// Poisson arrival rate, `lambda >= 0`.
    pub lambda: f64,
}

pub(crate) fn poisson_draw(rate: f64, rng: &mut ChaCha8Rng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
}

pub(crate) fn check_count_state(id: &str, y: &[f64], len: usize) -> Result<()> {
    if y.len() != len {
        return Err(FredError::InvalidInput(format!("{id}: state has length {}, expected {len}", y.len())));
    }
    if y.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
        return Err(FredError::InvalidInput(format!("{id}: counts must be nonnegative integers, got {y:?}")));
    }
    Ok(())
}

impl InarParams {
    /// Validated constructor.
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(FredError::param("p", p, "must lie in [0,1)"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FredError::param("lambda", lambda, "must be nonnegative"));
        }
        Ok(InarParams { p, lambda })
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.p, self.lambda)
    }

    /// Stationary mean `lambda / (1 - p)`.
    pub fn mean(&self) -> f64 {
        self.lambda / (1.0 - self.p)
    }

    /// `a∘h(u) = -log(1 - p^h + p^h e^{-u})`.
    pub fn compound_a(&self, u: f64, h: usize) -> f64 {
        let ph = self.p.powi(h as i32);
        -(1.0 - ph + ph * (-u).exp()).ln()
    }

    /// `E[Y_{t+h} | Y_t = y]`.
    pub fn conditional_mean(&self, y: f64, h: usize) -> f64 {
        let ph = self.p.powi(h as i32);
        ph * y + self.mean() * (1.0 - ph)
    }

    /// `log E[exp(-u Y_{t+m}) | Y_t = y]`.
    pub fn log_laplace(&self, u: f64, m: usize, y: f64) -> f64 {
        let pm = self.p.powi(m as i32);
        y * (1.0 - pm + pm * (-u).exp()).ln() - self.mean() * (1.0 - pm) * (1.0 - (-u).exp())
    }

    /// Generic affine representation.
    pub fn affine(&self) -> Result<AffineModel> {
        let InarParams { p, lambda } = *self;
        let mu = self.mean();
        AffineModel::new(AffineSpec {
            name: "inar".into(),
            dim: 1,
            a: Arc::new(move |u: &[f64]| vec![-(p * (-u[0]).exp() + 1.0 - p).ln()]),
            intercept: Intercept::Unconditional(Arc::new(move |u: &[f64]| -mu * (1.0 - (-u[0]).exp()))),
            grad_a0: Some(DMatrix::from_element(1, 1, p)),
            grad_c0: Some(DVector::from_element(1, -lambda / (1.0 - p))),
            domain: Arc::new(|u: &[f64]| u[0].is_finite()),
        })
    }

    fn check_u(u: f64) -> Result<()> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(FredError::param("u", u, "INAR FELD needs u > 0"));
        }
        Ok(())
    }

    /// Closed-form FELD loadings and constants.
    pub fn feld_components(&self, u: f64, h: usize) -> Result<FeldComponents> {
        Self::check_u(u)?;
        if h == 0 {
            return Err(FredError::Horizon("FELD needs h >= 1".into()));
        }
        let (p, mu) = (self.p, self.mean());
        let pw = |j: usize| p.powi(j as i32);
        let a = |j: usize| self.compound_a(u, j);
        let alpha_total = pw(h) * u - a(h);
        let beta_total = mu * (1.0 - pw(h)) * (u - 1.0 + (-u).exp());
        let mut alpha_terms = Vec::with_capacity(h);
        let mut beta_terms = Vec::with_capacity(h);
        for k in 0..h {
            let (near, far) = (a(h - k - 1), a(h - k));
            alpha_terms.push(vec![pw(k + 1) * near - pw(k) * far]);
            beta_terms.push(
                mu * (near * (1.0 - pw(k + 1)) - far * (1.0 - pw(k)))
                    - self.lambda * pw(h - k - 1) * (1.0 - (-u).exp()),
            );
        }
        Ok(FeldComponents { alpha_total: vec![alpha_total], beta_total, alpha_terms, beta_terms })
    }

    /// FELD table at `(u, Y_t = y0)`.
    pub fn feld_table(&self, u: f64, y0: f64, horizons: &[usize]) -> Result<DecompositionTable> {
        check_count_state("inar", &[y0], 1)?;
        build_table(Kind::Feld, Argument::Laplace(vec![u]), vec![y0], horizons, IDENTITY_TOL, |h| {
            let c = self.feld_components(u, h)?;
            Ok(((0..h).map(|k| c.term(k, &[y0])).collect(), c.total(&[y0])))
        })
    }

    /// `lim_{h -> inf}` FELD total: `lambda/(1-p) (u - 1 + e^{-u})`.
    pub fn feld_limit(&self, u: f64) -> Result<f64> {
        Self::check_u(u)?;
        Ok(self.mean() * (u - 1.0 + (-u).exp()))
    }
}

impl Simulate for InarParams {
    fn model_id(&self) -> &'static str {
        "inar"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        check_count_state("inar", y, 1)
    }

    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let n = state[0] as u64;
        let survivors = if n == 0 || self.p == 0.0 {
            0
        } else {
            Binomial::new(n, self.p).expect("valid thinning").sample(rng)
        };
        let arrivals = poisson_draw(self.lambda, rng);
        (vec![(survivors + arrivals) as f64], Vec::new())
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        Some(vec![poisson_draw(self.mean(), rng) as f64])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![self.mean().round()]
    }
}

impl Functional for InarParams {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::Laplace(u) if u.len() == 1 && u[0].is_finite() => Ok(()),
            _ => Err(FredError::Unsupported("INAR oracle supports scalar Laplace transforms".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::Laplace(u) => Ok(self.log_laplace(u[0], m, state[0])),
            _ => Err(FredError::Unsupported("INAR oracle supports scalar Laplace transforms".into())),
        }
    }
}
