//! Small dense linear-algebra and finite-difference helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{FredError, Result};

/// `m^h` by repeated multiplication (`h = 0` gives the identity).
pub fn mat_pow(m: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..h {
        out = &out * m;
    }
    out
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Builds an `n x n` matrix from row-major data.
pub fn from_row_major(n: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != n * n {
        return Err(FredError::InvalidInput(format!(
            "expected {} entries for a {n}x{n} matrix, got {}",
            n * n,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, data))
}

/// Infers `n` from a square row-major array.
pub fn square_from_row_major(data: &[f64]) -> Result<DMatrix<f64>> {
    let n = (data.len() as f64).sqrt().round() as usize;
    from_row_major(n, data)
}

/// Row-major flattening.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Max absolute asymmetry `|m - m'|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Inverse of a symmetric positive-definite matrix through Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| FredError::LinearAlgebra(format!("{what} is not positive definite")))
}

/// log-determinant of a symmetric positive-definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let c = sym
        .cholesky()
        .ok_or_else(|| FredError::LinearAlgebra(format!("{what} is not positive definite")))?;
    Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric square root of a PSD matrix (negative round-off eigenvalues clipped to zero).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Central-difference gradient.
pub fn gradient<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector map, rows = outputs.
pub fn jacobian<F>(f: F, x: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        let h = step * x[c].abs().max(1.0);
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..f0.len() {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Like [`jacobian`], but a column whose central difference is not finite falls back to a
/// forward, then backward, difference. Returns the Jacobian and the one-sided columns.
pub fn jacobian_in_domain<F>(f: F, x: &[f64], step: f64) -> (DMatrix<f64>, Vec<usize>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), x.len());
    let mut one_sided = Vec::new();
    let mut xp = x.to_vec();
    let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
    for c in 0..x.len() {
        let h = step * x[c].abs().max(1.0);
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        let col: Vec<f64> = match (finite(&fp), finite(&fm)) {
            (true, true) => fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect(),
            (true, false) => {
                one_sided.push(c);
                fp.iter().zip(&f0).map(|(a, b)| (a - b) / h).collect()
            }
            (false, true) => {
                one_sided.push(c);
                f0.iter().zip(&fm).map(|(a, b)| (a - b) / h).collect()
            }
            (false, false) => vec![f64::NAN; f0.len()],
        };
        for (r, v) in col.into_iter().enumerate() {
            j[(r, c)] = v;
        }
    }
    (j, one_sided)
}

/// Central-difference Hessian with step `step * max(1, |x_i|)`.
pub fn hessian<F>(f: F, x: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let hs: Vec<f64> = x.iter().map(|v| step * v.abs().max(1.0)).collect();
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        xp[i] = x[i] + hs[i];
        let fp = f(&xp);
        xp[i] = x[i] - hs[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (hs[i] * hs[i]);
        for j in 0..i {
            let mut e = |di: f64, dj: f64| {
                xp[i] = x[i] + di * hs[i];
                xp[j] = x[j] + dj * hs[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0))
                / (4.0 * hs[i] * hs[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Numerical rank from singular values with relative tolerance.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// Converts a slice to a column vector.
pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
