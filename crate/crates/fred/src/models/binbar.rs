//! Bivariate NBAR with specific intensities `X_1, X_2` and a common intensity `Z`.
//!
//! ```text
//! X_{j,t+1} ~ gamma(delta_j + Y_{j,t}),  Z_{t+1} ~ gamma(delta + sigma_1 Y_{1,t} + sigma_2 Y_{2,t})
//! Y_{j,t+1} ~ Poisson(alpha_j Z_{t+1} + beta_j X_{j,t+1})
//! ```
//!
//! The one-step transform is `Psi(u,1|Y_t) = exp(-a_1 Y_1 - a_2 Y_2 - b)` with the sign of
//! `b` as written in the model's own display; the affine engine receives `-b`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, AffineSpec, Intercept};
use crate::error::{FredError, Result};
use crate::linalg::{mat_pow, spectral_radius};
use crate::models::inar::{check_count_state, poisson_draw};
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::DecompositionTable;

/// Nine parameters `{alpha1, alpha2, beta1, beta2, delta1, delta2, sigma1, sigma2, delta}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiNbarParams {
    /// Loading of `Y_1` on the common intensity.
    pub alpha1: f64,
    /// Loading of `Y_2` on the common intensity.
    pub alpha2: f64,
    /// Loading of `Y_1` on its specific intensity.
    pub beta1: f64,
    /// Loading of `Y_2` on its specific intensity.
    pub beta2: f64,
    /// Shape offset of `X_1`.
    pub delta1: f64,
    /// Shape offset of `X_2`.
    pub delta2: f64,
    /// Feedback of `Y_1` into the common intensity.
    pub sigma1: f64,
    /// Feedback of `Y_2` into the common intensity.
    pub sigma2: f64,
    /// Shape offset of `Z`.
    pub delta: f64,
}

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; 9] = ["alpha1", "alpha2", "beta1", "beta2", "delta1", "delta2", "sigma1", "sigma2", "delta"];

impl BiNbarParams {
    /// Validates finiteness, the stationarity conditions, and mean stationarity of the
    /// VAR representation.
    pub fn new(v: [f64; 9]) -> Result<Self> {
        for (name, x) in PARAM_NAMES.iter().zip(v) {
            if !x.is_finite() {
                return Err(FredError::param(name, x, "must be finite"));
            }
        }
        let p = Self::from_array_unchecked(v);
        let (c1, c2) = p.stationarity_margins();
        if c1 <= 0.0 {
            return Err(FredError::param("1-alpha1-sigma1*beta1", c1, "must be positive"));
        }
        if c2 <= 0.0 {
            return Err(FredError::param("1-alpha2-sigma2*beta2", c2, "must be positive"));
        }
        let cross = p.sigma1 * p.sigma2 * p.beta1 * p.beta2;
        if c1 * c2 <= cross {
            return Err(FredError::param("stationarity product", c1 * c2 - cross, "must be positive"));
        }
        let rho = spectral_radius(&p.var_representation().1);
        if rho >= 1.0 {
            return Err(FredError::param("spectral_radius(A)", rho, "must be < 1"));
        }
        Ok(p)
    }

    fn from_array_unchecked(v: [f64; 9]) -> Self {
        BiNbarParams {
            alpha1: v[0],
            alpha2: v[1],
            beta1: v[2],
            beta2: v[3],
            delta1: v[4],
            delta2: v[5],
            sigma1: v[6],
            sigma2: v[7],
            delta: v[8],
        }
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.to_array())
    }

    /// Vector in [`PARAM_NAMES`] order.
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.alpha1, self.alpha2, self.beta1, self.beta2, self.delta1, self.delta2, self.sigma1, self.sigma2,
            self.delta,
        ]
    }

    /// Reference point estimates for a pair of weekly event-count series.
    pub fn reference_estimates() -> Self {
        Self::new([0.118, -0.067, 0.647, 0.391, 1.20, 1.27, -0.075, 0.453, 1.492]).expect("stationary")
    }

    /// [`Self::reference_estimates`] with the two negative loadings replaced by their absolute values
    /// (both lie well within one standard error of zero), so that every intensity is a
    /// valid gamma draw and the model can be simulated.
    pub fn reference_admissible() -> Self {
        Self::new([0.118, 0.067, 0.647, 0.391, 1.20, 1.27, 0.075, 0.453, 1.492]).expect("stationary")
    }

    /// `(1 - alpha1 - sigma1 beta1, 1 - alpha2 - sigma2 beta2)`.
    pub fn stationarity_margins(&self) -> (f64, f64) {
        (1.0 - self.alpha1 - self.sigma1 * self.beta1, 1.0 - self.alpha2 - self.sigma2 * self.beta2)
    }

    /// Whether all intensities are valid gamma/Poisson parameters (needed for simulation).
    pub fn is_admissible(&self) -> bool {
        self.to_array().iter().all(|v| *v >= 0.0) && self.delta1 > 0.0 && self.delta2 > 0.0 && self.delta > 0.0
    }

    fn logs(&self, u: &[f64]) -> (f64, f64, f64) {
        let w1 = -(-u[0]).exp_m1();
        let w2 = -(-u[1]).exp_m1();
        (1.0 + self.beta1 * w1, 1.0 + self.beta2 * w2, 1.0 + self.alpha1 * w1 + self.alpha2 * w2)
    }

    fn log_domain(&self, u: &[f64]) -> bool {
        let (l1, l2, l3) = self.logs(u);
        l1 > 0.0 && l2 > 0.0 && l3 > 0.0
    }

    /// One-step `(a_1, a_2, b)` with `Psi(u,1|Y) = exp(-a_1 Y_1 - a_2 Y_2 - b)`.
    pub fn one_step(&self, u: &[f64]) -> Result<(f64, f64, f64)> {
        check_u(u)?;
        if !self.log_domain(u) {
            return Err(FredError::Domain(format!("nbar2: nonpositive log argument at u = {u:?}")));
        }
        let (l1, l2, l3) = self.logs(u);
        let (g1, g2, g3) = (l1.ln(), l2.ln(), l3.ln());
        Ok((g1 + self.sigma1 * g3, g2 + self.sigma2 * g3, self.delta1 * g1 + self.delta2 * g2 + self.delta * g3))
    }

    /// `(a_1^{(h)}, a_2^{(h)}, b^{(h)})` with `b^{(h)} = b^{(h-1)} + b(a^{(h-1)})`.
    pub fn recursion(&self, u: &[f64], h: usize) -> Result<(f64, f64, f64)> {
        check_u(u)?;
        let mut cur = [u[0], u[1]];
        let mut b = 0.0;
        for step in 1..=h {
            let (a1, a2, bs) = self.one_step(&cur).map_err(|e| match e {
                FredError::Domain(m) => FredError::Domain(format!("{m} (recursion step {step})")),
                other => other,
            })?;
            b += bs;
            cur = [a1, a2];
        }
        Ok((cur[0], cur[1], b))
    }

    /// `log E[exp(-u'Y_{t+h}) | Y_t = y]`.
    pub fn log_laplace(&self, u: &[f64], h: usize, y: &[f64]) -> Result<f64> {
        let (a1, a2, b) = self.recursion(u, h)?;
        Ok(-a1 * y[0] - a2 * y[1] - b)
    }

    /// `E[Y_t | Y_{t-1}] = C + A Y_{t-1}`.
    pub fn var_representation(&self) -> (Vector2<f64>, DMatrix<f64>) {
        let c = Vector2::new(
            self.alpha1 * self.delta + self.beta1 * self.delta1,
            self.alpha2 * self.delta + self.beta2 * self.delta2,
        );
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                self.alpha1 * self.sigma1 + self.beta1,
                self.alpha1 * self.sigma2,
                self.alpha2 * self.sigma1,
                self.alpha2 * self.sigma2 + self.beta2,
            ],
        );
        (c, a)
    }

    /// Stationary mean `(I - A)^{-1} C`.
    pub fn mean(&self) -> Result<DVector<f64>> {
        let (c, a) = self.var_representation();
        (DMatrix::identity(2, 2) - a)
            .lu()
            .solve(&DVector::from_column_slice(c.as_slice()))
            .ok_or_else(|| FredError::LinearAlgebra("I - A singular".into()))
    }

    /// `E[Y_{t+h} | Y_t = y]` from powers of `A`.
    pub fn conditional_mean(&self, y: &[f64], h: usize) -> Result<Vec<f64>> {
        let mu = self.mean()?;
        let dev = DVector::from_column_slice(y) - &mu;
        Ok((&mu + mat_pow(&self.var_representation().1, h) * dev).as_slice().to_vec())
    }

    /// Generic affine representation (intercept `-b`).
    pub fn affine(&self) -> Result<AffineModel> {
        let (p, pa, pb) = (*self, *self, *self);
        let a = self.var_representation().1;
        let mu = self.mean()?;
        AffineModel::new(AffineSpec {
            name: "nbar2".into(),
            dim: 2,
            a: Arc::new(move |u: &[f64]| {
                let (l1, l2, l3) = pa.logs(u);
                vec![l1.ln() + pa.sigma1 * l3.ln(), l2.ln() + pa.sigma2 * l3.ln()]
            }),
            intercept: Intercept::OneStep(Arc::new(move |u: &[f64]| {
                let (l1, l2, l3) = pb.logs(u);
                -(pb.delta1 * l1.ln() + pb.delta2 * l2.ln() + pb.delta * l3.ln())
            })),
            grad_a0: Some(a),
            grad_c0: Some(-mu),
            domain: Arc::new(move |u: &[f64]| p.log_domain(u)),
        })
    }

    /// FELD table built through the affine recursion.
    pub fn feld_table(&self, u: &[f64], y0: &[f64], horizons: &[usize]) -> Result<DecompositionTable> {
        check_u(u)?;
        check_count_state("nbar2", y0, 2)?;
        self.affine()?.feld_table(u, y0, horizons)
    }
}

fn check_u(u: &[f64]) -> Result<()> {
    if u.len() != 2 {
        return Err(FredError::InvalidInput(format!("nbar2 argument must have 2 entries, got {}", u.len())));
    }
    if u.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(FredError::Domain(format!("nbar2 arguments must be nonnegative, got {u:?}")));
    }
    Ok(())
}

impl Simulate for BiNbarParams {
    fn model_id(&self) -> &'static str {
        "nbar2"
    }

    fn state_len(&self) -> usize {
        2
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        check_count_state("nbar2", y, 2)
    }

    /// Latent draws are `(X_1, X_2, Z)`.
    ///
    /// # Panics
    /// If the parameters are not admissible (see [`BiNbarParams::is_admissible`]).
    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        assert!(self.is_admissible(), "nbar2 simulation needs nonnegative parameters");
        let draw = |shape: f64, rng: &mut ChaCha8Rng| Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        let x1 = draw(self.delta1 + state[0], rng);
        let x2 = draw(self.delta2 + state[1], rng);
        let z = draw(self.delta + self.sigma1 * state[0] + self.sigma2 * state[1], rng);
        let y1 = poisson_draw(self.alpha1 * z + self.beta1 * x1, rng);
        let y2 = poisson_draw(self.alpha2 * z + self.beta2 * x2, rng);
        (vec![y1 as f64, y2 as f64], vec![x1, x2, z])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
}

impl Functional for BiNbarParams {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::Laplace(u) => check_u(u),
            _ => Err(FredError::Unsupported("nbar2 oracle supports Laplace transforms".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::Laplace(u) => self.log_laplace(u, m, state),
            _ => Err(FredError::Unsupported("nbar2 oracle supports Laplace transforms".into())),
        }
    }
}
