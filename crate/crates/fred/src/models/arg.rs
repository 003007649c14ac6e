//! Autoregressive gamma ARG(1), the discrete-time CIR process.
//!
//! `E[exp(-u Y_{t+1}) | Y_t] = exp(-beta u / (1+u) Y_t) (1+u)^{-delta}` and
//! `(1 - beta) Y_t ~ gamma(delta)` in the stationary regime.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, AffineSpec, FeldComponents, Intercept};
use crate::error::{FredError, Result};
use crate::models::inar::poisson_draw;
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// Parameters `{beta, delta}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgParams {
    /// Persistence, `0 <= beta < 1`.
    pub beta: f64,
    /// Shape, `delta > 0`.
    pub delta: f64,
}

impl ArgParams {
    /// Validated constructor.
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(FredError::param("beta", beta, "must lie in [0,1)"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FredError::param("delta", delta, "must be positive"));
        }
        Ok(ArgParams { beta, delta })
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.beta, self.delta)
    }

    /// Stationary mean `delta / (1 - beta)`.
    pub fn mean(&self) -> f64 {
        self.delta / (1.0 - self.beta)
    }

    /// `a(u) = beta u / (1 + u)`.
    pub fn a(&self, u: f64) -> f64 {
        self.beta * u / (1.0 + u)
    }

    /// `a∘h(u) = beta^h u / (1 + u (1 - beta^h)/(1 - beta))`.
    pub fn compound_a(&self, u: f64, h: usize) -> f64 {
        let bh = self.beta.powi(h as i32);
        bh * u / (1.0 + u * (1.0 - bh) / (1.0 - self.beta))
    }

    /// `c(u) = -delta log(1 + u/(1-beta))`.
    pub fn c(&self, u: f64) -> f64 {
        -self.delta * (1.0 + u / (1.0 - self.beta)).ln()
    }

    /// `log E[exp(-u Y_{t+m}) | Y_t = y]`.
    pub fn log_laplace(&self, u: f64, m: usize, y: f64) -> f64 {
        let bm = self.beta.powi(m as i32);
        let d = 1.0 + u * (1.0 - bm) / (1.0 - self.beta);
        -bm * u / d * y - self.delta * d.ln()
    }

    /// `E[Y_{t+h} | Y_t = y]`.
    pub fn conditional_mean(&self, y: f64, h: usize) -> f64 {
        let bh = self.beta.powi(h as i32);
        bh * y + self.mean() * (1.0 - bh)
    }

    /// Generic affine representation; arguments must exceed `-(1 - beta)`.
    pub fn affine(&self) -> Result<AffineModel> {
        let ArgParams { beta, delta } = *self;
        AffineModel::new(AffineSpec {
            name: "arg".into(),
            dim: 1,
            a: Arc::new(move |u: &[f64]| vec![beta * u[0] / (1.0 + u[0])]),
            intercept: Intercept::Unconditional(Arc::new(move |u: &[f64]| -delta * (1.0 + u[0] / (1.0 - beta)).ln())),
            grad_a0: Some(DMatrix::from_element(1, 1, beta)),
            grad_c0: Some(DVector::from_element(1, -delta / (1.0 - beta))),
            domain: Arc::new(move |u: &[f64]| u[0] > -(1.0 - beta)),
        })
    }

    fn check_u(u: f64) -> Result<()> {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(FredError::param("u", u, "ARG FELD needs u >= 0"));
        }
        Ok(())
    }

    /// `alpha(h,u)` or, with `k`, `alpha(h,k,u)`.
    pub fn feld_alpha(&self, u: f64, h: usize, k: Option<usize>) -> Result<f64> {
        Self::check_u(u)?;
        check_hk(h, k)?;
        let bw = |j: usize| self.beta.powi(j as i32);
        Ok(match k {
            None => u * bw(h) - self.compound_a(u, h),
            Some(k) => bw(k + 1) * self.compound_a(u, h - k - 1) - bw(k) * self.compound_a(u, h - k),
        })
    }

    /// `beta(h,u)` or, with `k`, `beta(h,k,u)`.
    pub fn feld_beta(&self, u: f64, h: usize, k: Option<usize>) -> Result<f64> {
        Self::check_u(u)?;
        check_hk(h, k)?;
        let bw = |j: usize| self.beta.powi(j as i32);
        let mu = self.mean();
        Ok(match k {
            None => u * mu * (1.0 - bw(h)) + self.c(u) - self.c(self.compound_a(u, h)),
            Some(k) => {
                let near = self.compound_a(u, h - k - 1);
                let far = self.compound_a(u, h - k);
                mu * (near * (1.0 - bw(k + 1)) - far * (1.0 - bw(k))) - self.delta * (1.0 + near).ln()
            }
        })
    }

    /// Closed-form FELD loadings and constants.
    pub fn feld_components(&self, u: f64, h: usize) -> Result<FeldComponents> {
        let mut alpha_terms = Vec::with_capacity(h);
        let mut beta_terms = Vec::with_capacity(h);
        for k in 0..h {
            alpha_terms.push(vec![self.feld_alpha(u, h, Some(k))?]);
            beta_terms.push(self.feld_beta(u, h, Some(k))?);
        }
        Ok(FeldComponents {
            alpha_total: vec![self.feld_alpha(u, h, None)?],
            beta_total: self.feld_beta(u, h, None)?,
            alpha_terms,
            beta_terms,
        })
    }

    /// FELD table at `(u, Y_t = y0)`.
    pub fn feld_table(&self, u: f64, y0: f64, horizons: &[usize]) -> Result<DecompositionTable> {
        if !(y0 >= 0.0) {
            return Err(FredError::param("y0", y0, "ARG states are nonnegative"));
        }
        build_table(Kind::Feld, Argument::Laplace(vec![u]), vec![y0], horizons, IDENTITY_TOL, |h| {
            let c = self.feld_components(u, h)?;
            Ok(((0..h).map(|k| c.term(k, &[y0])).collect(), c.total(&[y0])))
        })
    }

    /// `d a∘k(u) / d(beta, delta)` for k = 0..=h by the chain rule
    /// `d a∘k = (da/dtheta)(a∘(k-1)) + a'(a∘(k-1)) d a∘(k-1)`.
    pub fn compound_a_param_gradient(&self, u: f64, h: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(h + 1);
        out.push([0.0, 0.0]);
        let mut prev = u;
        for k in 1..=h {
            let d_beta = prev / (1.0 + prev);
            let slope = self.beta / (1.0 + prev).powi(2);
            let last = out[k - 1];
            out.push([d_beta + slope * last[0], slope * last[1]]);
            prev = self.a(prev);
        }
        out
    }
}

fn check_hk(h: usize, k: Option<usize>) -> Result<()> {
    if h == 0 {
        return Err(FredError::Horizon("FELD needs h >= 1".into()));
    }
    if let Some(k) = k {
        if k >= h {
            return Err(FredError::Horizon(format!("FELD term needs k < h (h={h}, k={k})")));
        }
    }
    Ok(())
}

/// Crossing point `u*(h, beta)` where `alpha(h,u) = alpha(h+1,u)`.
///
/// A nonpositive value means the two loadings do not cross on `u > 0`.
pub fn crossing(h: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(FredError::param("beta", beta, "crossing needs 0 < beta < 1"));
    }
    if h == 0 {
        return Err(FredError::Horizon("crossing needs h >= 1".into()));
    }
    let bh = beta.powi(h as i32);
    let bh1 = bh * beta;
    Ok((1.0 - beta) * (bh1 + bh - 1.0) / ((1.0 - bh) * (1.0 - bh1)))
}

impl Simulate for ArgParams {
    fn model_id(&self) -> &'static str {
        "arg"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != 1 || !(y[0] >= 0.0) || !y[0].is_finite() {
            return Err(FredError::InvalidInput(format!("arg: state must be one nonnegative number, got {y:?}")));
        }
        Ok(())
    }

    /// `Z ~ Poisson(beta Y_t)`, `Y_{t+1} ~ gamma(delta + Z, 1)`; `Z` is the latent draw.
    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let z = poisson_draw(self.beta * state[0], rng);
        let y = Gamma::new(self.delta + z as f64, 1.0).expect("positive shape").sample(rng);
        (vec![y], vec![z as f64])
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        Some(vec![Gamma::new(self.delta, 1.0 / (1.0 - self.beta)).ok()?.sample(rng)])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![self.mean()]
    }
}

impl Functional for ArgParams {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::Laplace(u) if u.len() == 1 && u[0] > -(1.0 - self.beta) => Ok(()),
            _ => Err(FredError::Unsupported("ARG oracle supports scalar Laplace arguments u > -(1-beta)".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::Laplace(u) => Ok(self.log_laplace(u[0], m, state[0])),
            _ => Err(FredError::Unsupported("ARG oracle supports scalar Laplace arguments".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_example() {
        // beta^3 u / (1 + u (1 + beta + beta^2)) = 0.125 / 2.75
        let m = ArgParams::new(0.5, 1.0).unwrap();
        assert!((m.compound_a(1.0, 3) - 0.125 / 2.75).abs() < 1e-15);
        let aff = m.affine().unwrap();
        assert!((aff.compound_a(&[1.0], 3).unwrap()[0] - 0.125 / 2.75).abs() < 1e-15);
    }

    #[test]
    fn alpha_example() {
        let m = ArgParams::new(0.9, 1.0).unwrap();
        let a = m.feld_alpha(1.0, 2, None).unwrap();
        assert!((a - 0.81 * (1.0 - 1.0 / 2.9)).abs() < 1e-12);
        assert!((a - 0.530690).abs() < 1e-6);
    }

    #[test]
    fn crossing_examples() {
        assert!((crossing(1, 0.9).unwrap() - 3.737).abs() < 5e-4);
        assert!((crossing(2, 0.9).unwrap() - 1.047).abs() < 5e-4);
    }

    #[test]
    fn zero_beta_has_no_state_loading() {
        let m = ArgParams::new(0.0, 1.0).unwrap();
        for h in 1..5 {
            assert_eq!(m.feld_alpha(2.0, h, None).unwrap(), 0.0);
        }
    }
}
