//! Cauchy AR(1): `Y_t = phi Y_{t-1} + sigma eps_t` with standard Cauchy noise.
//!
//! The horizon-h law is Cauchy with drift `phi^h y0` and scale
//! `s_h = sigma (1 - |phi|^h) / (1 - |phi|)`. Moments do not exist, the FEKD does.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{FredError, Result};
use crate::oracle::{Functional, TransformSpec};
use crate::quad::{integrate, QuadSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind};

/// Parameters `{phi, sigma}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyArModel {
    /// Autoregressive coefficient, `|phi| < 1`.
    pub phi: f64,
    /// Noise scale, `sigma > 0`.
    pub sigma: f64,
}

impl CauchyArModel {
    /// Validated constructor.
    pub fn new(phi: f64, sigma: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(FredError::param("phi", phi, "|phi| must be < 1"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FredError::param("sigma", sigma, "must be positive"));
        }
        Ok(CauchyArModel { phi, sigma })
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.phi, self.sigma)
    }

    /// Scale `s_m` (zero at m = 0).
    pub fn scale(&self, m: usize) -> f64 {
        let a = self.phi.abs();
        self.sigma * (1.0 - a.powi(m as i32)) / (1.0 - a)
    }

    /// `(drift, scale)` of `Y_{t+h} | Y_t = y0`.
    pub fn horizon_law(&self, y0: f64, h: usize) -> (f64, f64) {
        (self.phi.powi(h as i32) * y0, self.scale(h))
    }

    /// Variance-based decompositions do not exist for Cauchy noise.
    pub fn fevd(&self, _h: usize) -> Result<Vec<f64>> {
        Err(FredError::Unsupported(
            "the FEVD requires square-integrable observations; Cauchy AR(1) has no variance".into(),
        ))
    }

    /// `E[ log(1 + ((y - phi^m Y_{t+j}) / s_m)^2) | Y_t = y0 ]` by quadrature.
    ///
    /// With `Y_{t+j} = d_j + s_j eps` and `eps = tan(theta)`, the Cauchy measure becomes
    /// `d theta / pi`; the endpoint log singularity `-log cos^2(theta)` is integrated in
    /// closed form (`2 log 2`) so the remaining integrand is smooth and periodic.
    pub fn expected_log_term(&self, y: f64, y0: f64, m: usize, j: usize, quad: &QuadSpec) -> Result<f64> {
        let s_m = self.scale(m);
        let (d_j, s_j) = self.horizon_law(y0, j);
        let pm = self.phi.powi(m as i32);
        let c = y - pm * d_j;
        let q = pm * s_j;
        if q == 0.0 {
            return Ok((1.0 + (c / s_m).powi(2)).ln());
        }
        let g = |t: f64| {
            let (s, co) = t.sin_cos();
            ((c * co - q * s).powi(2) + s_m * s_m * co * co).ln()
        };
        // The integrand dips sharply at tan(theta) = c/q when s_m is small, and near +-pi/2
        // when q is small. Split at the inner dip and grade nodes toward both ends of each
        // piece with t^3 / (t^3 + (1-t)^3).
        let mid = (c / q).atan();
        let mut total = 0.0;
        for (lo, hi) in [(-FRAC_PI_2, mid), (mid, FRAC_PI_2)] {
            let len = hi - lo;
            if len <= 0.0 {
                continue;
            }
            let graded = |t: f64| {
                let (a, b) = (t * t * t, (1.0 - t).powi(3));
                let d = a + b;
                let jac = 3.0 * t * t * (1.0 - t) * (1.0 - t) / (d * d);
                if jac == 0.0 {
                    return 0.0;
                }
                len * jac * g(lo + len * a / d)
            };
            total += integrate(graded, 0.0, 1.0, quad)?.value;
        }
        Ok(total / PI + 2.0 * LN_2 - 2.0 * s_m.ln())
    }

    /// FEKD term `gamma(k,h | y, Y_t = y0)`.
    pub fn fekd_term(&self, y: f64, y0: f64, h: usize, k: usize, quad: &QuadSpec) -> Result<f64> {
        if h < 2 || k > h - 2 {
            return Err(FredError::Horizon(format!("FEKD term needs h >= 2 and k <= h-2 (h={h}, k={k})")));
        }
        let near = self.expected_log_term(y, y0, h - k - 1, k + 1, quad)?;
        let far = self.expected_log_term(y, y0, h - k, k, quad)?;
        Ok((self.scale(h - k - 1) / self.scale(h - k)).ln() + near - far)
    }

    /// FEKD total `E[log f(y,h|Y_t) - log f(y,1|Y_{t+h-1})]`.
    pub fn fekd_total(&self, y: f64, y0: f64, h: usize, quad: &QuadSpec) -> Result<f64> {
        if h == 0 {
            return Err(FredError::Horizon("FEKD needs h >= 1".into()));
        }
        let (d, s) = self.horizon_law(y0, h);
        let z = (y - d) / s;
        let last = self.expected_log_term(y, y0, 1, h - 1, quad)?;
        Ok((self.sigma / s).ln() - (1.0 + z * z).ln() + last)
    }

    /// FEKD table; identity checked at the quadrature tolerance.
    pub fn fekd_table(&self, y: f64, y0: f64, horizons: &[usize], quad: &QuadSpec) -> Result<DecompositionTable> {
        let tol = (10.0 * quad.tol).max(1e-10);
        build_table(Kind::Fekd, Argument::DensityAt(vec![y]), vec![y0], horizons, tol, |h| {
            let terms = if h >= 2 {
                (0..=h - 2).map(|k| self.fekd_term(y, y0, h, k, quad)).collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok((terms, self.fekd_total(y, y0, h, quad)?))
        })
    }

    /// `log f(y, m | x)`.
    pub fn log_density(&self, y: f64, x: f64, m: usize) -> f64 {
        let s = self.scale(m);
        let z = (y - self.phi.powi(m as i32) * x) / s;
        -PI.ln() - s.ln() - (1.0 + z * z).ln()
    }
}

impl Simulate for CauchyArModel {
    fn model_id(&self) -> &'static str {
        "cauchy"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let e: f64 = Cauchy::new(0.0, self.sigma).expect("sigma > 0").sample(rng);
        (vec![self.phi * state[0] + e], Vec::new())
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let s = self.sigma / (1.0 - self.phi.abs());
        Some(vec![Cauchy::new(0.0, s).ok()?.sample(rng)])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![0.0]
    }
}

impl Functional for CauchyArModel {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::DensityAt(y) if y.len() == 1 => Ok(()),
            TransformSpec::DensityAt(_) => Err(FredError::InvalidInput("Cauchy AR(1) is univariate".into())),
            _ => Err(FredError::Unsupported("Cauchy AR(1) has no Laplace transform".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::DensityAt(y) if m >= 1 => Ok(self.log_density(y[0], state[0], m)),
            TransformSpec::DensityAt(_) => Err(FredError::Horizon("density functional needs m >= 1".into())),
            _ => Err(FredError::Unsupported("Cauchy AR(1) has no Laplace transform".into())),
        }
    }
}
