//! Small derivative-free and least-squares optimizers.

use nalgebra::{DMatrix, DVector};

use crate::linalg::jacobian;

/// Outcome of a minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    /// Minimizer.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub value: f64,
    /// Iterations used.
    pub iterations: usize,
    /// Whether the stopping rule was met before the iteration cap.
    pub converged: bool,
}

/// Nelder-Mead settings.
#[derive(Clone, Copy, Debug)]
pub struct NelderMead {
    /// Initial simplex edge length.
    pub step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { step: 0.1, f_tol: 1e-12, x_tol: 1e-10, max_iter: 5000 }
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite objective values are treated as `+inf`.
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> OptimResult {
        let n = x0.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step;
            simplex.push(x);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            iterations += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let diameter = simplex[1..]
                .iter()
                .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread.abs() <= self.f_tol * (1.0 + values[0].abs()) && diameter <= self.x_tol.max(1e-8) {
                converged = true;
                break;
            }
            if diameter <= self.x_tol {
                converged = spread.is_finite();
                break;
            }

            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
            } else {
                let (xc, fc) = if fr < values[n] {
                    let xc = along(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = xc;
                    values[n] = fc;
                } else {
                    for i in 1..=n {
                        let xs: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                        values[i] = eval(&xs);
                        simplex[i] = xs;
                    }
                }
            }
        }
        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty simplex");
        OptimResult { x: simplex[best].clone(), value: values[best], iterations, converged }
    }
}

/// Levenberg-Marquardt settings for `min ||r(x)||^2`.
#[derive(Clone, Copy, Debug)]
pub struct LevenbergMarquardt {
    /// Iteration cap.
    pub max_iter: usize,
    /// Stop when the relative cost decrease falls below this.
    pub cost_tol: f64,
    /// Stop when the gradient norm `||2 J'r||` falls below this.
    pub grad_tol: f64,
    /// Finite-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        LevenbergMarquardt { max_iter: 200, cost_tol: 1e-14, grad_tol: 1e-10, fd_step: 1e-6 }
    }
}

/// Outcome of a least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LsqResult {
    /// Minimizer.
    pub x: Vec<f64>,
    /// `||r(x)||^2`.
    pub cost: f64,
    /// Gradient norm `||2 J'r||` at `x`.
    pub grad_norm: f64,
    /// Iterations used.
    pub iterations: usize,
    /// Whether the gradient or cost criterion was met.
    pub converged: bool,
}

impl LevenbergMarquardt {
    /// Minimizes `||r(x)||^2`. Residual vectors with non-finite entries count as `+inf` cost.
    pub fn minimize<F: Fn(&[f64]) -> Vec<f64>>(&self, r: F, x0: &[f64]) -> LsqResult {
        let cost_of = |v: &[f64]| {
            let c: f64 = v.iter().map(|e| e * e).sum();
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        };
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut res = r(&x);
        let mut cost = cost_of(&res);
        let mut lambda = 1e-3;
        let mut iterations = 0;
        let mut converged = false;
        let mut grad_norm = f64::INFINITY;
        while iterations < self.max_iter {
            iterations += 1;
            let j = jacobian(&r, &x, self.fd_step);
            let rv = DVector::from_vec(res.clone());
            let g = j.transpose() * &rv;
            grad_norm = 2.0 * g.norm();
            if grad_norm < self.grad_tol {
                converged = true;
                break;
            }
            let jtj = j.transpose() * &j;
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                }
                let step = match a.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let cres = r(&cand);
                let ccost = cost_of(&cres);
                if ccost < cost {
                    let rel = (cost - ccost) / cost.max(1e-300);
                    x = cand;
                    res = cres;
                    cost = ccost;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if rel < self.cost_tol {
                        converged = true;
                    }
                    break;
                }
                lambda *= 4.0;
            }
            if !improved || converged {
                if !improved {
                    // No descent direction left at finite-difference precision.
                    converged = grad_norm < self.grad_tol.sqrt();
                }
                break;
            }
        }
        if converged || iterations >= self.max_iter {
            let j = jacobian(&r, &x, self.fd_step);
            grad_norm = 2.0 * (j.transpose() * DVector::from_vec(res)).norm();
        }
        LsqResult { x, cost, grad_norm, iterations, converged }
    }
}

/// Newton refinement of a smooth minimum with numerical derivatives and step halving.
///
/// Returns the refined point and the final gradient.
pub fn newton_polish<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = crate::linalg::gradient(&f, &x, step);
    for _ in 0..iters {
        let h: DMatrix<f64> = crate::linalg::hessian(&f, &x, step);
        let Some(dir) = h.lu().solve(&(-DVector::from_vec(g.clone()))) else { break };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx {
                x = cand;
                fx = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        g = crate::linalg::gradient(&f, &x, step);
        if !moved {
            break;
        }
    }
    (x, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = NelderMead { max_iter: 20000, ..Default::default() }.minimize(f, &[-1.2, 1.0]);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn lm_exponential_fit() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let r = |p: &[f64]| ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect::<Vec<_>>();
        let out = LevenbergMarquardt::default().minimize(r, &[1.0, 0.1]);
        assert!((out.x[0] - 2.0).abs() < 1e-6 && (out.x[1] - 0.7).abs() < 1e-6, "{out:?}");
    }
}
