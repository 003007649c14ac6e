//! Gaussian VAR(1): `Y_t = Phi Y_{t-1} + eps_t`, `eps_t ~ N(0, Sigma)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, AffineSpec, Intercept};
use crate::error::{FredError, Result};
use crate::linalg::{self, mat_pow, spd_inverse, spd_log_det};
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// JSON parameters `{phi, sigma}` (row-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussVarJson {
    /// Autoregressive matrix, row-major.
    pub phi: Vec<f64>,
    /// Innovation covariance, row-major.
    pub sigma: Vec<f64>,
}

/// Gaussian VAR(1) model.
#[derive(Clone, Debug)]
pub struct GaussianVarModel {
    phi: DMatrix<f64>,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
}

/// Per-term FEKD coefficients: `gamma(k,h) = a + b'y + y'c y`.
#[derive(Clone, Debug)]
pub struct FekdCoefficients {
    /// Constant.
    pub a: f64,
    /// Linear loading.
    pub b: DVector<f64>,
    /// Quadratic loading (state independent).
    pub c: DMatrix<f64>,
}

impl FekdCoefficients {
    /// Evaluates the quadratic form at `y`.
    pub fn eval(&self, y: &DVector<f64>) -> f64 {
        self.a + self.b.dot(y) + (y.transpose() * &self.c * y)[(0, 0)]
    }
}

impl GaussianVarModel {
    /// Checks stationarity and that `Sigma` is symmetric positive definite.
    pub fn new(phi: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        if phi.ncols() != n || sigma.nrows() != n || sigma.ncols() != n || n == 0 {
            return Err(FredError::InvalidInput("phi and sigma must be square of equal size".into()));
        }
        let rho = linalg::spectral_radius(&phi);
        if rho >= 1.0 {
            return Err(FredError::param("phi", rho, "spectral radius must be < 1"));
        }
        let asym = linalg::asymmetry(&sigma);
        if asym > 1e-12 {
            return Err(FredError::param("sigma", asym, "must be symmetric"));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| FredError::param("sigma", linalg::min_sym_eigenvalue(&sigma), "must be positive definite"))?
            .l();
        Ok(GaussianVarModel { phi, sigma, chol })
    }

    /// Builds from the JSON schema.
    pub fn from_json(j: &GaussVarJson) -> Result<Self> {
        Self::new(linalg::square_from_row_major(&j.phi)?, linalg::square_from_row_major(&j.sigma)?)
    }

    /// `Phi = [[0.5,0.1],[0.2,0.6]]`, `Sigma = [[1,0.2],[0.2,1]]`.
    pub fn reference() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.2, 0.6]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]),
        )
        .expect("reference parameters are valid")
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    /// `Phi`.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// `Sigma`.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `Sigma_h = Sigma + Phi Sigma_{h-1} Phi'`, with `Sigma_0 = 0`.
    pub fn sigma_h(&self, h: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut s = DMatrix::zeros(n, n);
        for _ in 0..h {
            s = &self.sigma + &self.phi * s * self.phi.transpose();
        }
        s
    }

    /// Stationary covariance (discrete Lyapunov fixed point).
    pub fn sigma_infinity(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut s = DMatrix::zeros(n, n);
        for _ in 0..100_000 {
            let next = &self.sigma + &self.phi * &s * self.phi.transpose();
            let gap = (&next - &s).abs().max();
            s = next;
            if gap < 1e-16 * s.abs().max().max(1.0) {
                break;
            }
        }
        s
    }

    /// FEVD terms `Phi^{h-k-1} Sigma Phi'^{h-k-1}`, k = 0..h-1.
    pub fn fevd(&self, h: usize) -> Result<Vec<DMatrix<f64>>> {
        if h == 0 {
            return Err(FredError::Horizon("FEVD needs h >= 1".into()));
        }
        Ok((0..h)
            .map(|k| {
                let p = mat_pow(&self.phi, h - k - 1);
                &p * &self.sigma * p.transpose()
            })
            .collect())
    }

    /// FEVD table for variance entry `(i,j)`.
    pub fn fevd_table(&self, y0: &[f64], horizons: &[usize], entry: (usize, usize)) -> Result<DecompositionTable> {
        let (i, j) = entry;
        if i >= self.dim() || j >= self.dim() {
            return Err(FredError::InvalidInput(format!("variance entry ({i},{j}) out of range")));
        }
        build_table(Kind::Fevd, Argument::VarianceEntry(i, j), y0.to_vec(), horizons, 1e-12, |h| {
            let terms = self.fevd(h)?.iter().map(|m| m[(i, j)]).collect();
            Ok((terms, self.sigma_h(h)[(i, j)]))
        })
    }

    /// `sqrt((y - Phi^h y0)' Sigma_h^{-1} (y - Phi^h y0))`.
    pub fn mahalanobis(&self, y: &[f64], y0: &[f64], h: usize) -> Result<f64> {
        if h == 0 {
            return Err(FredError::Horizon("Mahalanobis distance needs h >= 1".into()));
        }
        let e = linalg::dvec(y) - mat_pow(&self.phi, h) * linalg::dvec(y0);
        let inv = spd_inverse(&self.sigma_h(h), "Sigma_h")?;
        Ok((e.transpose() * inv * &e)[(0, 0)].max(0.0).sqrt())
    }

    /// FEKD coefficients for term `k` at horizon `h` given `Y_t = y0`.
    pub fn fekd_coefficients(&self, y0: &[f64], h: usize, k: usize) -> Result<FekdCoefficients> {
        if h < 2 || k > h - 2 {
            return Err(FredError::Horizon(format!("FEKD term needs h >= 2 and k <= h-2 (h={h}, k={k})")));
        }
        let s_far = self.sigma_h(h - k);
        let s_near = self.sigma_h(h - k - 1);
        let inv_far = spd_inverse(&s_far, "Sigma_{h-k}")?;
        let inv_near = spd_inverse(&s_near, "Sigma_{h-k-1}")?;
        let d = &inv_far - &inv_near;
        let p_h = mat_pow(&self.phi, h);
        let p_near = mat_pow(&self.phi, h - k - 1);
        let p_far = mat_pow(&self.phi, h - k);
        let x = p_h * linalg::dvec(y0);
        let tr_near = (&inv_near * &p_near * self.sigma_h(k + 1) * p_near.transpose()).trace();
        let tr_far = (&inv_far * &p_far * self.sigma_h(k) * p_far.transpose()).trace();
        let a = 0.5 * (spd_log_det(&s_near, "Sigma_{h-k-1}")? - spd_log_det(&s_far, "Sigma_{h-k}")?)
            + 0.5 * (tr_near - tr_far)
            - 0.5 * (x.transpose() * &d * &x)[(0, 0)];
        let b = &d * &x;
        let c = &d * -0.5;
        Ok(FekdCoefficients { a, b, c })
    }

    /// Direct FEKD total at `y` given `Y_t = y0`.
    pub fn fekd_total(&self, y: &[f64], y0: &[f64], h: usize) -> Result<f64> {
        if h == 0 {
            return Err(FredError::Horizon("FEKD needs h >= 1".into()));
        }
        let e = linalg::dvec(y) - mat_pow(&self.phi, h) * linalg::dvec(y0);
        let s_h = self.sigma_h(h);
        let inv_h = spd_inverse(&s_h, "Sigma_h")?;
        let inv_1 = spd_inverse(&self.sigma, "Sigma")?;
        let quad_h = (e.transpose() * &inv_h * &e)[(0, 0)];
        let quad_1 = (e.transpose() * &inv_1 * &e)[(0, 0)];
        let tr = (&inv_1 * &self.phi * self.sigma_h(h - 1) * self.phi.transpose()).trace();
        Ok(0.5 * (spd_log_det(&self.sigma, "Sigma")? - spd_log_det(&s_h, "Sigma_h")?) - 0.5 * quad_h
            + 0.5 * quad_1
            + 0.5 * tr)
    }

    /// FEKD table at evaluation point `y`.
    pub fn fekd_table(&self, y: &[f64], y0: &[f64], horizons: &[usize]) -> Result<DecompositionTable> {
        self.check_len(y)?;
        self.check_len(y0)?;
        let yv = linalg::dvec(y);
        build_table(Kind::Fekd, Argument::DensityAt(y.to_vec()), y0.to_vec(), horizons, IDENTITY_TOL, |h| {
            let terms = if h >= 2 {
                (0..=h - 2)
                    .map(|k| self.fekd_coefficients(y0, h, k).map(|c| c.eval(&yv)))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok((terms, self.fekd_total(y, y0, h)?))
        })
    }

    /// FELD term `k` at horizon `h`: `b((Phi')^{h-k-1} u)` with `b(u) = u'Sigma u / 2`.
    pub fn feld_term(&self, u: &[f64], h: usize, k: usize) -> Result<f64> {
        if k >= h {
            return Err(FredError::Horizon(format!("FELD term needs k < h (h={h}, k={k})")));
        }
        let v = mat_pow(&self.phi.transpose(), h - k - 1) * linalg::dvec(u);
        Ok(0.5 * (v.transpose() * &self.sigma * &v)[(0, 0)])
    }

    /// FELD table (state independent).
    pub fn feld_table(&self, u: &[f64], y0: &[f64], horizons: &[usize]) -> Result<DecompositionTable> {
        self.check_len(u)?;
        self.check_len(y0)?;
        let uv = linalg::dvec(u);
        build_table(Kind::Feld, Argument::Laplace(u.to_vec()), y0.to_vec(), horizons, IDENTITY_TOL, |h| {
            let terms = (0..h).map(|k| self.feld_term(u, h, k)).collect::<Result<Vec<_>>>()?;
            Ok((terms, 0.5 * (uv.transpose() * self.sigma_h(h) * &uv)[(0, 0)]))
        })
    }

    /// Strong-linear affine representation: `a(u) = Phi'u`, `b(u) = u'Sigma u / 2`.
    pub fn affine(&self) -> Result<AffineModel> {
        let phi_t = self.phi.transpose();
        let sigma = self.sigma.clone();
        let n = self.dim();
        AffineModel::new(AffineSpec {
            name: "gauss-var".into(),
            dim: n,
            a: Arc::new(move |u: &[f64]| (&phi_t * linalg::dvec(u)).as_slice().to_vec()),
            intercept: Intercept::OneStep(Arc::new(move |u: &[f64]| {
                let v = linalg::dvec(u);
                0.5 * (v.transpose() * &sigma * &v)[(0, 0)]
            })),
            grad_a0: Some(self.phi.clone()),
            grad_c0: Some(DVector::zeros(n)),
            domain: Arc::new(|_: &[f64]| true),
        })
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(FredError::InvalidInput(format!(
                "vector of length {} for a {}-dimensional VAR",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn log_density(&self, y: &[f64], x: &[f64], m: usize) -> Result<f64> {
        let s = self.sigma_h(m);
        let e = linalg::dvec(y) - mat_pow(&self.phi, m) * linalg::dvec(x);
        let inv = spd_inverse(&s, "Sigma_m")?;
        let n = self.dim() as f64;
        Ok(-0.5 * n * (2.0 * PI).ln() - 0.5 * spd_log_det(&s, "Sigma_m")? - 0.5 * (e.transpose() * inv * &e)[(0, 0)])
    }
}

impl Simulate for GaussianVarModel {
    fn model_id(&self) -> &'static str {
        "gauss-var"
    }

    fn state_len(&self) -> usize {
        self.dim()
    }

    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let next = &self.phi * linalg::dvec(state) + &self.chol * z;
        (next.as_slice().to_vec(), Vec::new())
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let l = self.sigma_infinity().cholesky()?.l();
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        Some((l * z).as_slice().to_vec())
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

impl Functional for GaussianVarModel {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::Laplace(u) | TransformSpec::DensityAt(u) => self.check_len(u),
            TransformSpec::MatrixLaplace(_) => Err(FredError::Unsupported("matrix Laplace for a VAR".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::Laplace(u) => {
                let uv = linalg::dvec(u);
                let mean = mat_pow(&self.phi, m) * linalg::dvec(state);
                Ok(-uv.dot(&mean) + 0.5 * (uv.transpose() * self.sigma_h(m) * &uv)[(0, 0)])
            }
            TransformSpec::DensityAt(y) if m >= 1 => self.log_density(y, state, m),
            TransformSpec::DensityAt(_) => Err(FredError::Horizon("density functional needs m >= 1".into())),
            TransformSpec::MatrixLaplace(_) => Err(FredError::Unsupported("matrix Laplace for a VAR".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_h_with_zero_phi() {
        let m = GaussianVarModel::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        for h in 1..5 {
            assert_eq!(m.sigma_h(h), DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn rejects_explosive_phi() {
        let r = GaussianVarModel::new(DMatrix::from_row_slice(1, 1, &[1.01]), DMatrix::identity(1, 1));
        assert!(r.is_err());
    }

    #[test]
    fn mahalanobis_homogeneous() {
        let m = GaussianVarModel::reference();
        let y0 = [2.0, 1.0];
        let centre = mat_pow(m.phi(), 3) * linalg::dvec(&y0);
        let y1 = [centre[0] + 0.3, centre[1] - 0.1];
        let y2 = [centre[0] + 0.6, centre[1] - 0.2];
        let d1 = m.mahalanobis(&y1, &y0, 3).unwrap();
        let d2 = m.mahalanobis(&y2, &y0, 3).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
        assert!(m.mahalanobis(centre.as_slice(), &y0, 3).unwrap() < 1e-15);
    }
}
