//! Bivariate NBAR estimators: VAR(1) OLS and two-step GMM on pairwise Laplace moments.

use nalgebra::{DMatrix, DVector};

use super::optim::LevenbergMarquardt;
use super::{Diagnostics, EstimationResult};
use crate::error::{FredError, Result};
use crate::linalg::{jacobian, jacobian_in_domain, numerical_rank, spd_inverse};
use crate::models::binbar::{BiNbarParams, PARAM_NAMES};

/// A Laplace moment `E{[exp(-u'Y_t) - Psi(u,1|Y_{t-1})] exp(-v'Y_{t-1})} = 0`.
pub type Quadruplet = [f64; 4];

/// The two single-series / contemporaneous scenarios plus the symmetric `{0.01, 0.41}` grid.
pub fn default_quadruplets() -> Vec<Quadruplet> {
    let us = [[0.41, 0.01], [0.01, 0.41], [0.41, 0.41]];
    let vs = [[0.41, 0.01], [0.01, 0.41], [0.01, 0.01]];
    let mut out = Vec::with_capacity(9);
    for u in us {
        for v in vs {
            out.push([u[0], u[1], v[0], v[1]]);
        }
    }
    out
}

fn check_pairs(series: &[Vec<f64>], min_len: usize) -> Result<()> {
    if series.len() < min_len {
        return Err(FredError::InvalidInput(format!("need at least {min_len} observations, got {}", series.len())));
    }
    for (i, row) in series.iter().enumerate() {
        if row.len() != 2 {
            return Err(FredError::Data { row: i + 1, reason: format!("expected 2 columns, got {}", row.len()) });
        }
        if row.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
            return Err(FredError::Data { row: i + 1, reason: format!("{row:?} are not nonnegative integers") });
        }
    }
    Ok(())
}

/// Equation-by-equation OLS of `Y_t = C + A Y_{t-1} + e_t` with system HC0 covariance.
///
/// Parameters are `c1, c2, a11, a12, a21, a22`; the extras report the eigenvalues of `A`
/// (real parts and moduli) and its spectral radius.
pub fn binbar_ols(series: &[Vec<f64>]) -> Result<EstimationResult> {
    check_pairs(series, 50)?;
    let t = series.len() - 1;
    let x = DMatrix::from_fn(t, 3, |r, c| if c == 0 { 1.0 } else { series[r][c - 1] });
    let y = DMatrix::from_fn(t, 2, |r, c| series[r + 1][c]);
    let xtx_inv = spd_inverse(&(x.transpose() * &x), "X'X").map_err(|_| FredError::InvalidInput("regressors are collinear".into()))?;
    let b = &xtx_inv * x.transpose() * &y; // 3 x 2, column i = equation i
    let e = &y - &x * &b;
    // Stacked by equation: (c_i, a_i1, a_i2) for i = 1, 2.
    let mut meat = DMatrix::zeros(6, 6);
    for r in 0..t {
        let xr = x.row(r).transpose();
        let xx = &xr * xr.transpose();
        for i in 0..2 {
            for j in 0..2 {
                let w = e[(r, i)] * e[(r, j)];
                let mut blk = meat.view_mut((3 * i, 3 * j), (3, 3));
                blk += &xx * w;
            }
        }
    }
    let mut bread = DMatrix::zeros(6, 6);
    bread.view_mut((0, 0), (3, 3)).copy_from(&xtx_inv);
    bread.view_mut((3, 3), (3, 3)).copy_from(&xtx_inv);
    let cov_stacked = &bread * meat * &bread;
    // Reorder to (c1, c2, a11, a12, a21, a22).
    let order = [0usize, 3, 1, 2, 4, 5];
    let cov = DMatrix::from_fn(6, 6, |r, c| cov_stacked[(order[r], order[c])]);
    let theta = vec![b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(2, 0)], b[(1, 1)], b[(2, 1)]];

    let a_hat = DMatrix::from_row_slice(2, 2, &theta[2..6]);
    let eig = a_hat.complex_eigenvalues();
    let mut diag = Diagnostics {
        objective: Some(e.iter().map(|v| v * v).sum()),
        converged: true,
        ..Default::default()
    };
    for (i, l) in eig.iter().enumerate() {
        diag.extra.insert(format!("eigenvalue{}_re", i + 1), l.re);
        diag.extra.insert(format!("eigenvalue{}_modulus", i + 1), l.norm());
    }
    diag.extra.insert("spectral_radius".into(), eig.iter().map(|l| l.norm()).fold(0.0, f64::max));
    EstimationResult::new("ols", &["c1", "c2", "a11", "a12", "a21", "a22"], theta, cov, diag)
}

/// Per-observation moment vectors `g_t(theta)`, `t = 1..T-1`: one Laplace moment per
/// quadruplet followed by the 6 OLS orthogonality conditions `e_t ⊗ (1, Y_{t-1})`.
pub fn moment_contributions(params: &BiNbarParams, series: &[Vec<f64>], quads: &[Quadruplet]) -> Result<Vec<Vec<f64>>> {
    let steps: Vec<(f64, f64, f64)> = quads.iter().map(|q| params.one_step(&q[..2])).collect::<Result<_>>()?;
    let (c, a) = params.var_representation();
    Ok(series
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            let mut g = Vec::with_capacity(quads.len() + 6);
            for (q, (a1, a2, b)) in quads.iter().zip(&steps) {
                let realized = (-q[0] * cur[0] - q[1] * cur[1]).exp();
                let predicted = (-a1 * prev[0] - a2 * prev[1] - b).exp();
                g.push((realized - predicted) * (-q[2] * prev[0] - q[3] * prev[1]).exp());
            }
            for i in 0..2 {
                let e = cur[i] - c[i] - a[(i, 0)] * prev[0] - a[(i, 1)] * prev[1];
                g.extend([e, e * prev[0], e * prev[1]]);
            }
            g
        })
        .collect())
}

/// Sample mean of the moment contributions and the uncentered covariance `S`.
pub fn moment_mean_and_cov(g: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = g.len() as f64;
    let q = g[0].len();
    let mut mean = DVector::zeros(q);
    let mut s = DMatrix::zeros(q, q);
    for row in g {
        let v = DVector::from_column_slice(row);
        mean += &v;
        s += &v * v.transpose();
    }
    (mean / n, s / n)
}

// Positive parameters (betas and deltas) are optimized on the log scale; loadings
// alpha and sigma stay unrestricted so that zero or negative values remain reachable.
const LOG_SCALE: [bool; 9] = [false, false, true, true, true, true, false, false, true];

fn to_free(theta: &[f64; 9]) -> Vec<f64> {
    theta.iter().zip(LOG_SCALE).map(|(v, l)| if l { v.ln() } else { *v }).collect()
}

fn from_free(z: &[f64]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..9 {
        out[i] = if LOG_SCALE[i] { z[i].exp() } else { z[i] };
    }
    out
}

fn mean_moments(theta: &[f64; 9], series: &[Vec<f64>], quads: &[Quadruplet]) -> Option<DVector<f64>> {
    let p = BiNbarParams::new(*theta).ok()?;
    let g = moment_contributions(&p, series, quads).ok()?;
    let (m, _) = moment_mean_and_cov(&g);
    m.iter().all(|v| v.is_finite()).then_some(m)
}

/// Two-step GMM: identity weight, then `S^{-1}` at the first-step estimate.
///
/// Standard errors come from the sandwich `(G'WG)^{-1} G'WSWG (G'WG)^{-1} / T`. The extras
/// record the first-step estimate's objective in the second-step metric
/// (`step1_objective_w2`) and the final objective (`step2_objective`).
pub fn binbar_gmm(series: &[Vec<f64>], quads: &[Quadruplet], init: [f64; 9]) -> Result<EstimationResult> {
    check_pairs(series, 50)?;
    if quads.len() < 9 {
        return Err(FredError::InvalidInput(format!("need at least 9 quadruplets, got {}", quads.len())));
    }
    for q in quads {
        if q.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(FredError::Domain(format!("quadruplet {q:?} must be nonnegative")));
        }
    }
    BiNbarParams::new(init)?;
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        if LOG_SCALE[i] && init[i] <= 0.0 {
            return Err(FredError::param(name, init[i], "GMM start must be positive"));
        }
    }
    check_rank(series, quads, &init)?;

    let t = (series.len() - 1) as f64;
    let nq = quads.len() + 6;
    let residual = |z: &[f64], chol_t: &DMatrix<f64>| -> Vec<f64> {
        match mean_moments(&from_free(z), series, quads) {
            Some(m) => (chol_t * m * t.sqrt()).as_slice().to_vec(),
            None => vec![f64::NAN; nq],
        }
    };
    let lm = LevenbergMarquardt { max_iter: 500, cost_tol: 1e-15, grad_tol: 1e-9, fd_step: 1e-6 };

    let eye = DMatrix::identity(nq, nq);
    let step1 = lm.minimize(|z| residual(z, &eye), &to_free(&init));
    let theta1 = from_free(&step1.x);
    let p1 = BiNbarParams::new(theta1)?;
    let (_, s1) = moment_mean_and_cov(&moment_contributions(&p1, series, quads)?);
    let w2 = spd_inverse(&s1, "moment covariance").map_err(|_| FredError::Numerical("moment covariance is singular".into()))?;
    let l = w2.clone().cholesky().ok_or_else(|| FredError::Numerical("weight matrix not PD".into()))?.l();
    let lt = l.transpose();
    let objective = |z: &[f64]| residual(z, &lt).iter().map(|r| r * r).sum::<f64>();
    let step1_in_w2 = objective(&step1.x);
    let step2 = lm.minimize(|z| residual(z, &lt), &step1.x);
    let theta = from_free(&step2.x);
    let params = BiNbarParams::new(theta)?;

    let g = moment_contributions(&params, series, quads)?;
    let (_, s) = moment_mean_and_cov(&g);
    // Near the admissible edge a central difference can leave the domain.
    let (gjac, one_sided) = jacobian_in_domain(
        |th: &[f64]| {
            let arr: [f64; 9] = th.try_into().expect("9 parameters");
            match mean_moments(&arr, series, quads) {
                Some(m) => m.as_slice().to_vec(),
                None => vec![f64::NAN; nq],
            }
        },
        &theta,
        1e-6,
    );
    if gjac.iter().any(|v| !v.is_finite()) {
        return Err(FredError::Numerical("moment Jacobian not finite at the estimate".into()));
    }
    let gwg = gjac.transpose() * &w2 * &gjac;
    let bread = spd_inverse(&gwg, "G'WG").map_err(|_| FredError::Numerical("G'WG is singular".into()))?;
    let meat = gjac.transpose() * &w2 * &s * &w2 * &gjac;
    let cov = &bread * meat * &bread / t;

    let mut diag = Diagnostics {
        objective: Some(step2.cost),
        iterations: step1.iterations + step2.iterations,
        converged: step1.converged && step2.converged,
        gradient_norm: Some(step2.grad_norm),
        ..Default::default()
    };
    diag.extra.insert("step1_objective_identity".into(), step1.cost);
    diag.extra.insert("step1_objective_w2".into(), step1_in_w2);
    diag.extra.insert("step2_objective".into(), step2.cost);
    diag.extra.insert("n_moments".into(), nq as f64);
    diag.extra.insert("one_sided_jacobian_columns".into(), one_sided.len() as f64);
    EstimationResult::new("gmm", &PARAM_NAMES, theta.to_vec(), cov, diag)
}

/// Rank of the Laplace-moment Jacobian at `init`; on failure lists the quadruplets that
/// add no rank when added in order.
fn check_rank(series: &[Vec<f64>], quads: &[Quadruplet], init: &[f64; 9]) -> Result<()> {
    let nl = quads.len();
    let j = jacobian(
        |th: &[f64]| {
            let arr: [f64; 9] = th.try_into().expect("9 parameters");
            match mean_moments(&arr, series, quads) {
                Some(m) => m.as_slice()[..nl].to_vec(),
                None => vec![f64::NAN; nl],
            }
        },
        init,
        1e-6,
    );
    if j.iter().any(|v| !v.is_finite()) {
        return Err(FredError::Domain("Laplace moments not finite at the starting value".into()));
    }
    // Rows are rescaled so that the rank reflects directions, not moment magnitudes.
    let scaled = DMatrix::from_fn(nl, 9, |r, c| {
        let n = j.row(r).norm();
        if n > 0.0 {
            j[(r, c)] / n
        } else {
            0.0
        }
    });
    const TOL: f64 = 1e-10;
    let rank = numerical_rank(&scaled, TOL);
    if rank >= 9 {
        return Ok(());
    }
    let mut dependent = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut cur = 0;
    for r in 0..nl {
        kept.push(r);
        let sub = DMatrix::from_fn(kept.len(), 9, |i, c| scaled[(kept[i], c)]);
        let rk = numerical_rank(&sub, TOL);
        if rk > cur {
            cur = rk;
        } else {
            kept.pop();
            dependent.push(r);
        }
    }
    Err(FredError::RankDeficient { rank, dependent })
}
