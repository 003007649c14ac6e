//! Composite Gauss-Legendre quadrature with panel doubling.

use std::f64::consts::PI;

use crate::error::{FredError, Result};

/// Quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSpec {
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Initial number of panels.
    pub panels: usize,
    /// Maximum number of doublings.
    pub max_doublings: usize,
    /// Required absolute error estimate.
    pub tol: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { order: 20, panels: 10, max_doublings: 8, tol: 1e-8 }
    }
}

impl QuadSpec {
    /// Total nodes on the first pass.
    pub fn budget(&self) -> usize {
        self.order * self.panels
    }
}

/// Integral value and error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    /// Integral estimate on the finest grid.
    pub value: f64,
    /// `|I_{2P} - I_P|`.
    pub error: f64,
}

/// Nodes and weights on [-1, 1] by Newton iteration on Legendre polynomials.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, x: &[f64], w: &[f64]) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(mid + 0.5 * width * xi);
        }
        total += 0.5 * width * s;
    }
    total
}

/// Integrates `f` on `[a, b]`, doubling the panel count until two successive estimates
/// agree within `spec.tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadResult> {
    if spec.budget() < 200 {
        return Err(FredError::InvalidInput(format!("quadrature budget {} < 200 nodes", spec.budget())));
    }
    let (x, w) = gauss_legendre(spec.order);
    let mut panels = spec.panels;
    let mut prev = composite(&f, a, b, panels, &x, &w);
    let mut err = f64::INFINITY;
    for _ in 0..spec.max_doublings {
        panels *= 2;
        let cur = composite(&f, a, b, panels, &x, &w);
        err = (cur - prev).abs();
        prev = cur;
        if err < spec.tol.min(1e-10) {
            break;
        }
    }
    if !(err <= spec.tol) || !prev.is_finite() {
        return Err(FredError::Quadrature { estimate: err });
    }
    Ok(QuadResult { value: prev, error: err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 20] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn smooth_integral() {
        let r = integrate(|t: f64| t.cos(), 0.0, PI / 2.0, &QuadSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }
}
