//! Wishart autoregression WAR(1).
//!
//! `Y_{t+1} | Y_t` is noncentral Wishart with `K` degrees of freedom, scale `Sigma` and
//! noncentrality `M Y_t M'`:
//!
//! ```text
//! log E[exp(-Tr(Gamma Y_{t+h})) | Y_t]
//!     = -Tr[(M^h)' Gamma (I + 2 Sigma_h Gamma)^{-1} M^h Y_t] - (K/2) log det(I + 2 Sigma_h Gamma)
//! ```
//!
//! States are flattened row-major.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FredError, Result};
use crate::linalg::{self, mat_pow, min_sym_eigenvalue, psd_sqrt, square_from_row_major, to_row_major};
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// JSON parameters `{m, sigma, k_dof}` (matrices row-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WarJson {
    /// Autoregressive matrix.
    pub m: Vec<f64>,
    /// Scale matrix.
    pub sigma: Vec<f64>,
    /// Degrees of freedom.
    pub k_dof: f64,
}

/// WAR(1) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WarParams {
    m: DMatrix<f64>,
    sigma: DMatrix<f64>,
    k_dof: f64,
}

fn psd_tol(m: &DMatrix<f64>) -> f64 {
    1e-12 * m.abs().max().max(1.0)
}

impl WarParams {
    /// Validates stationarity, `Sigma` PSD and `K > n - 1`.
    pub fn new(m: DMatrix<f64>, sigma: DMatrix<f64>, k_dof: f64) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n || sigma.shape() != (n, n) {
            return Err(FredError::InvalidInput("m and sigma must be square of equal size".into()));
        }
        let rho = linalg::spectral_radius(&m);
        if rho >= 1.0 {
            return Err(FredError::param("spectral_radius(M)", rho, "must be < 1"));
        }
        if linalg::asymmetry(&sigma) > 1e-12 {
            return Err(FredError::InvalidInput("sigma must be symmetric".into()));
        }
        if min_sym_eigenvalue(&sigma) < -psd_tol(&sigma) {
            return Err(FredError::InvalidInput("sigma must be positive semi-definite".into()));
        }
        if !(k_dof > n as f64 - 1.0) || !k_dof.is_finite() {
            return Err(FredError::param("k_dof", k_dof, "must exceed n - 1"));
        }
        Ok(WarParams { m, sigma, k_dof })
    }

    /// Builds from the JSON schema.
    pub fn from_json(j: &WarJson) -> Result<Self> {
        Self::new(square_from_row_major(&j.m)?, square_from_row_major(&j.sigma)?, j.k_dof)
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Autoregressive matrix.
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Scale matrix.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Degrees of freedom.
    pub fn k_dof(&self) -> f64 {
        self.k_dof
    }

    /// `Sigma_h = Sigma + M Sigma_{h-1} M'`, `Sigma_0 = 0`.
    pub fn sigma_h(&self, h: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut s = DMatrix::zeros(n, n);
        for _ in 0..h {
            s = &self.sigma + &self.m * s * self.m.transpose();
        }
        s
    }

    /// Validates a symmetric PSD matrix argument of the right size.
    pub fn check_psd(&self, x: &DMatrix<f64>, what: &str) -> Result<()> {
        let n = self.dim();
        if x.shape() != (n, n) {
            return Err(FredError::InvalidInput(format!("{what} must be {n}x{n}")));
        }
        if linalg::asymmetry(x) > 1e-10 * x.abs().max().max(1.0) {
            return Err(FredError::InvalidInput(format!("{what} must be symmetric")));
        }
        if min_sym_eigenvalue(x) < -1e-10 * x.abs().max().max(1.0) {
            return Err(FredError::Domain(format!("{what} must be positive semi-definite")));
        }
        Ok(())
    }

    /// `(Gamma (I + 2 Sigma_m Gamma)^{-1}, log det(I + 2 Sigma_m Gamma))`.
    fn resolvent(&self, gamma: &DMatrix<f64>, m: usize) -> Result<(DMatrix<f64>, f64)> {
        let n = self.dim();
        let mat = DMatrix::identity(n, n) + self.sigma_h(m) * gamma * 2.0;
        let lu = mat.clone().lu();
        let det = lu.determinant();
        if !(det > 0.0) {
            return Err(FredError::LinearAlgebra(format!("det(I + 2 Sigma_{m} Gamma) = {det}")));
        }
        let inv = lu.try_inverse().ok_or_else(|| FredError::LinearAlgebra(format!("I + 2 Sigma_{m} Gamma singular")))?;
        Ok((gamma * inv, det.ln()))
    }

    /// `Q_m = (M^m)' Gamma (I + 2 Sigma_m Gamma)^{-1} M^m` and the log-determinant.
    fn q(&self, gamma: &DMatrix<f64>, m: usize) -> Result<(DMatrix<f64>, f64)> {
        let (g, ld) = self.resolvent(gamma, m)?;
        let mp = mat_pow(&self.m, m);
        Ok((mp.transpose() * g * mp, ld))
    }

    /// `log E[exp(-Tr(Gamma Y_{t+h})) | Y_t = y0]`.
    pub fn log_laplace(&self, gamma: &DMatrix<f64>, y0: &DMatrix<f64>, h: usize) -> Result<f64> {
        let (q, ld) = self.q(gamma, h)?;
        Ok(-(q * y0).trace() - 0.5 * self.k_dof * ld)
    }

    /// `E[Y_{t+h} | Y_t = y0] = M^h Y_t (M^h)' + K Sigma_h`.
    pub fn conditional_mean(&self, y0: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
        let mp = mat_pow(&self.m, h);
        &mp * y0 * mp.transpose() + self.sigma_h(h) * self.k_dof
    }

    fn check_args(&self, gamma: &DMatrix<f64>, y0: &DMatrix<f64>) -> Result<()> {
        self.check_psd(gamma, "Gamma")?;
        self.check_psd(y0, "Y_t")
    }

    /// FELD total `log Psi + Tr(Gamma E[Y_{t+h}|Y_t])`.
    pub fn feld_total(&self, gamma: &DMatrix<f64>, y0: &DMatrix<f64>, h: usize) -> Result<f64> {
        self.check_args(gamma, y0)?;
        if h == 0 {
            return Err(FredError::Horizon("FELD needs h >= 1".into()));
        }
        Ok(self.log_laplace(gamma, y0, h)? + (gamma * self.conditional_mean(y0, h)).trace())
    }

    /// State-loading matrix of the term: `(M^h)' Gamma [(I+2 Sigma_{h-k-1} Gamma)^{-1} - (I+2 Sigma_{h-k} Gamma)^{-1}] M^h`.
    pub fn feld_term_loading(&self, gamma: &DMatrix<f64>, h: usize, k: usize) -> Result<DMatrix<f64>> {
        check_hk(h, k)?;
        let (g_near, _) = self.resolvent(gamma, h - k - 1)?;
        let (g_far, _) = self.resolvent(gamma, h - k)?;
        let mp = mat_pow(&self.m, h);
        Ok(mp.transpose() * (g_near - g_far) * mp)
    }

    /// FELD term `E[log Psi(Gamma,h-k|Y_{t+k}) - log Psi(Gamma,h-k-1|Y_{t+k+1}) | Y_t]`.
    pub fn feld_term(&self, gamma: &DMatrix<f64>, y0: &DMatrix<f64>, h: usize, k: usize) -> Result<f64> {
        self.check_args(gamma, y0)?;
        check_hk(h, k)?;
        let kk = self.k_dof;
        let (q_near, ld_near) = self.q(gamma, h - k - 1)?;
        let (q_far, ld_far) = self.q(gamma, h - k)?;
        let state = (self.feld_term_loading(gamma, h, k)? * y0).trace();
        Ok(state + kk * (q_near * self.sigma_h(k + 1)).trace() - kk * (q_far * self.sigma_h(k)).trace()
            - 0.5 * kk * (ld_far - ld_near))
    }

    /// FELD table.
    pub fn feld_table(&self, gamma: &DMatrix<f64>, y0: &DMatrix<f64>, horizons: &[usize]) -> Result<DecompositionTable> {
        self.check_args(gamma, y0)?;
        build_table(
            Kind::Feld,
            Argument::MatrixLaplace(to_row_major(gamma)),
            to_row_major(y0),
            horizons,
            IDENTITY_TOL,
            |h| {
                let terms = (0..h).map(|k| self.feld_term(gamma, y0, h, k)).collect::<Result<Vec<_>>>()?;
                Ok((terms, self.feld_total(gamma, y0, h)?))
            },
        )
    }

    /// Integer degrees of freedom usable by the sampler.
    pub fn integer_dof(&self) -> Result<usize> {
        let k = self.k_dof;
        if k.fract() != 0.0 || k < self.dim() as f64 {
            return Err(FredError::Unsupported(format!(
                "WAR simulation needs an integer K >= n (K = {k}, n = {})",
                self.dim()
            )));
        }
        Ok(k as usize)
    }

    fn state_matrix(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), y)
    }
}

fn check_hk(h: usize, k: usize) -> Result<()> {
    if k >= h {
        return Err(FredError::Horizon(format!("FELD term needs k < h (h={h}, k={k})")));
    }
    Ok(())
}

impl Simulate for WarParams {
    fn model_id(&self) -> &'static str {
        "war"
    }

    fn state_len(&self) -> usize {
        self.dim() * self.dim()
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.state_len() {
            return Err(FredError::InvalidInput(format!("war: state must have {} entries", self.state_len())));
        }
        self.integer_dof()?;
        self.check_psd(&self.state_matrix(y), "Y_t")
    }

    /// Writes `Y_t = sum_i x_i x_i'` from its eigen-decomposition (padded with zero
    /// vectors up to K), propagates `x_i' = M x_i + eps_i` and returns `sum_i x_i' x_i''`.
    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let k = self.integer_dof().expect("integer K checked before simulation");
        let y = self.state_matrix(state);
        let y = (&y + y.transpose()) * 0.5;
        let eig = y.symmetric_eigen();
        let root = psd_sqrt(&self.sigma);
        let mut next = DMatrix::zeros(n, n);
        for i in 0..k {
            let x = if i < n {
                eig.eigenvectors.column(i) * eig.eigenvalues[i].max(0.0).sqrt()
            } else {
                DVector::zeros(n)
            };
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let xn = &self.m * x + &root * z;
            next += &xn * xn.transpose();
        }
        (to_row_major(&next), Vec::new())
    }

    fn burn_in_start(&self) -> Vec<f64> {
        to_row_major(&(self.sigma.clone() * self.k_dof))
    }
}

impl Functional for WarParams {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::MatrixLaplace(g) => self.check_psd(g, "Gamma"),
            _ => Err(FredError::Unsupported("WAR oracle supports matrix Laplace transforms".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        match transform {
            TransformSpec::MatrixLaplace(g) => self.log_laplace(g, &self.state_matrix(state), m),
            _ => Err(FredError::Unsupported("WAR oracle supports matrix Laplace transforms".into())),
        }
    }
}
