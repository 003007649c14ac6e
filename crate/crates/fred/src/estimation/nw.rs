//! Nadaraya-Watson estimator of FELD terms for a univariate Markov series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FredError, Result};

/// Kernel shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Standard normal density.
    Gaussian,
    /// `0.75 (1 - x^2)` on `[-1, 1]`.
    Epanechnikov,
}

impl Kernel {
    /// Kernel density at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Kernel::Epanechnikov => {
                if x.abs() <= 1.0 {
                    0.75 * (1.0 - x * x)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Bandwidth choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Fixed positive bandwidth.
    Fixed(f64),
    /// `1.06 sd T^{-1/5}`.
    Silverman,
}

/// Kernel and bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Kernel shape.
    pub kernel: Kernel,
    /// Bandwidth rule.
    pub bandwidth: Bandwidth,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { kernel: Kernel::Gaussian, bandwidth: Bandwidth::Silverman }
    }
}

impl KernelSpec {
    /// Resolves the bandwidth for `series`.
    pub fn bandwidth_for(&self, series: &[f64]) -> Result<f64> {
        let b = match self.bandwidth {
            Bandwidth::Fixed(b) => b,
            Bandwidth::Silverman => {
                let n = series.len() as f64;
                let mean = series.iter().sum::<f64>() / n;
                let sd = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                1.06 * sd * n.powf(-0.2)
            }
        };
        if !(b > 0.0 && b.is_finite()) {
            return Err(FredError::param("bandwidth", b, "must be positive and finite"));
        }
        Ok(b)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `gamma_hat(k,h|u,y)`: a kernel regression on `Y_t = y` of
/// `log[Psi_hat(u,h-k|Y_{t+k}) / Psi_hat(u,h-k-1|Y_{t+k+1})]`, where
/// `Psi_hat(u,m|z)` regresses `exp(-u Y_{t+m})` on `Y_t = z` over every `t` with `t+m`
/// inside the sample, and `Psi_hat(u,0|z) = exp(-u z)`.
pub fn nw_feld(series: &[f64], u: f64, y: f64, h: usize, k: usize, spec: &KernelSpec) -> Result<f64> {
    let n = series.len();
    if n < 200 {
        return Err(FredError::InvalidInput(format!("need at least 200 observations, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(FredError::InvalidInput("series contains non-finite values".into()));
    }
    if !(u.is_finite()) {
        return Err(FredError::param("u", u, "must be finite"));
    }
    if h == 0 || k >= h {
        return Err(FredError::Horizon(format!("need 0 <= k < h (h={h}, k={k})")));
    }
    if h + 1 >= n {
        return Err(FredError::Horizon("horizon exceeds the sample".into()));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q05, q95) = (quantile(&sorted, 0.05), quantile(&sorted, 0.95));
    if !(y >= q05 && y <= q95) {
        return Err(FredError::Domain(format!("y = {y} outside the sample's [5%, 95%] range [{q05}, {q95}]")));
    }
    let b = spec.bandwidth_for(series)?;
    let kern = spec.kernel;

    let m_far = h - k;
    let m_near = h - k - 1;
    let disc: Vec<f64> = series.iter().map(|v| (-u * v).exp()).collect();

    // Outer smoothing weights at y.
    let t_max = n - k - 1; // t + k + 1 <= n - 1
    let w: Vec<f64> = series[..t_max].iter().map(|yt| kern.eval((yt - y) / b)).collect();
    let wsum: f64 = w.iter().sum();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    if wmax < 1e-12 {
        return Err(FredError::Numerical(format!("empty kernel window at y = {y}")));
    }

    // Psi_hat(u, m | Y_s) for m = h-k and h-k-1 at every sample point, from one pass over
    // the kernel window of each point. Pairs farther apart than `reach` bandwidths carry
    // Gaussian weight below exp(-72) of the peak and are skipped.
    let reach = match kern {
        Kernel::Gaussian => 12.0 * b,
        Kernel::Epanechnikov => b,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| series[i].total_cmp(&series[j]));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| series[i]).collect();
    let smooth = |z: f64| -> Result<(f64, f64)> {
        let lo = sorted_vals.partition_point(|v| *v < z - reach);
        let hi = sorted_vals.partition_point(|v| *v <= z + reach);
        let (mut nf, mut df, mut nn, mut dn) = (0.0, 0.0, 0.0, 0.0);
        for &t in &order[lo..hi] {
            let kv = kern.eval((series[t] - z) / b);
            if t + m_far < n {
                nf += kv * disc[t + m_far];
                df += kv;
            }
            if m_near > 0 && t + m_near < n {
                nn += kv * disc[t + m_near];
                dn += kv;
            }
        }
        if df < 1e-12 || (m_near > 0 && dn < 1e-12) {
            return Err(FredError::Numerical(format!("empty kernel window at z = {z}")));
        }
        let near = if m_near == 0 { (-u * z).exp() } else { nn / dn };
        Ok((nf / df, near))
    };
    let psi: Vec<Result<(f64, f64)>> = (0..n).into_par_iter().map(|s| smooth(series[s])).collect();
    let psi: Vec<(f64, f64)> = psi.into_iter().collect::<Result<_>>()?;
    let ratios: Vec<Result<f64>> = (0..t_max)
        .map(|t| {
            if w[t] == 0.0 {
                return Ok(0.0);
            }
            Ok(w[t] * (psi[t + k].0 / psi[t + k + 1].1).ln())
        })
        .collect();
    let mut acc = 0.0;
    for r in ratios {
        acc += r?;
    }
    Ok(acc / wsum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadSpec};

    #[test]
    fn kernels_are_symmetric_densities() {
        for (k, r) in [(Kernel::Gaussian, 12.0), (Kernel::Epanechnikov, 1.0)] {
            let mass = integrate(|x| k.eval(x), -r, r, &QuadSpec::default()).unwrap().value;
            assert!((mass - 1.0).abs() < 1e-6, "{k:?}: {mass}");
            for x in [0.1, 0.5, 0.9, 2.0] {
                assert_eq!(k.eval(x), k.eval(-x));
            }
        }
    }
}
