//! Finite-state Markov chains.
//!
//! Convention: **column-stochastic**. `p[(i, j)] = P(X_{t+1} = i | X_t = j)`, so with the
//! indicator encoding `E[X_{t+h} | X_t] = P^h X_t`. A state is carried as the one-element
//! vector `[index]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FredError, Result};
use crate::linalg::mat_pow;
use crate::oracle::{Functional, TransformSpec};
use crate::sim::Simulate;
use crate::table::{build_table, Argument, DecompositionTable, Kind, IDENTITY_TOL};

/// JSON parameters `{p: column-major array, n}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovJson {
    /// Transition matrix, column-major (column j is the law of X_{t+1} given X_t = j).
    pub p: Vec<f64>,
    /// Number of states.
    pub n: usize,
}

/// Column-stochastic transition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    p: DMatrix<f64>,
}

impl MarkovChain {
    /// Validates entries in [0,1] and unit column sums.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(FredError::InvalidInput("transition matrix must be square and nonempty".into()));
        }
        for ((i, j), v) in p.iter().enumerate().map(|(idx, v)| ((idx % n, idx / n), v)) {
            if !(0.0..=1.0).contains(v) {
                return Err(FredError::param(&format!("p[{i}][{j}]"), *v, "must lie in [0,1]"));
            }
        }
        for j in 0..n {
            let s: f64 = p.column(j).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(FredError::param(&format!("column {j}"), s, "must sum to 1"));
            }
        }
        Ok(MarkovChain { p })
    }

    /// Builds from the JSON schema.
    pub fn from_json(j: &MarkovJson) -> Result<Self> {
        if j.p.len() != j.n * j.n {
            return Err(FredError::InvalidInput(format!("expected {} entries, got {}", j.n * j.n, j.p.len())));
        }
        Self::new(DMatrix::from_column_slice(j.n, j.n, &j.p))
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// One-step matrix.
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `P^h`.
    pub fn power(&self, h: usize) -> DMatrix<f64> {
        mat_pow(&self.p, h)
    }

    fn check_index(&self, i: usize, what: &str) -> Result<()> {
        if i >= self.n() {
            return Err(FredError::InvalidInput(format!("{what} index {i} out of range (n={})", self.n())));
        }
        Ok(())
    }

    /// `E[ log (P^m)_{y, X_{t+j}} | X_t = x0 ]`, erroring on a reachable zero probability.
    fn expected_log_density(&self, y: usize, x0: usize, m: usize, j: usize) -> Result<f64> {
        let pm = self.power(m);
        let w = self.power(j).column(x0).clone_owned();
        let mut acc = 0.0;
        for s in 0..self.n() {
            if w[s] == 0.0 {
                continue;
            }
            let v = pm[(y, s)];
            if v <= 0.0 {
                return Err(FredError::Domain(format!("zero transition probability (P^{m})[{y}][{s}] inside a log")));
            }
            acc += w[s] * v.ln();
        }
        Ok(acc)
    }

    /// FEKD term `[log~(P^{h-k})_y P^k - log~(P^{h-k-1})_y P^{k+1}] X_t`.
    pub fn fekd_term(&self, y: usize, x0: usize, h: usize, k: usize) -> Result<f64> {
        self.check_index(y, "evaluation")?;
        self.check_index(x0, "state")?;
        if h < 2 || k > h - 2 {
            return Err(FredError::Horizon(format!("FEKD term needs h >= 2 and k <= h-2 (h={h}, k={k})")));
        }
        Ok(self.expected_log_density(y, x0, h - k, k)? - self.expected_log_density(y, x0, h - k - 1, k + 1)?)
    }

    /// FEKD total `log (P^h)_{y,x0} - E[log P_{y, X_{t+h-1}}]`.
    pub fn fekd_total(&self, y: usize, x0: usize, h: usize) -> Result<f64> {
        self.check_index(y, "evaluation")?;
        self.check_index(x0, "state")?;
        if h == 0 {
            return Err(FredError::Horizon("FEKD needs h >= 1".into()));
        }
        Ok(self.expected_log_density(y, x0, h, 0)? - self.expected_log_density(y, x0, 1, h - 1)?)
    }

    /// FEKD table for evaluation state `y`.
    pub fn fekd_table(&self, y: usize, x0: usize, horizons: &[usize]) -> Result<DecompositionTable> {
        build_table(
            Kind::Fekd,
            Argument::DensityAt(vec![y as f64]),
            vec![x0 as f64],
            horizons,
            IDENTITY_TOL,
            |h| {
                let terms = if h >= 2 {
                    (0..=h - 2).map(|k| self.fekd_term(y, x0, h, k)).collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Ok((terms, self.fekd_total(y, x0, h)?))
            },
        )
    }

    /// Row vector `exp(-u)' P^m` (the horizon-m Laplace transform for every start state).
    fn laplace_row(&self, u: &[f64], m: usize) -> DVector<f64> {
        let e = DVector::from_iterator(self.n(), u.iter().map(|v| (-v).exp()));
        self.power(m).transpose() * e
    }

    /// `E[ log Psi(u, m | X_{t+j}) | X_t = x0 ]`.
    fn expected_log_laplace(&self, u: &[f64], x0: usize, m: usize, j: usize) -> Result<f64> {
        let row = self.laplace_row(u, m);
        let w = self.power(j).column(x0).clone_owned();
        let mut acc = 0.0;
        for s in 0..self.n() {
            if w[s] == 0.0 {
                continue;
            }
            if row[s] <= 0.0 {
                return Err(FredError::Domain(format!("nonpositive Laplace entry at state {s}")));
            }
            acc += w[s] * row[s].ln();
        }
        Ok(acc)
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() || u.iter().any(|v| !v.is_finite()) {
            return Err(FredError::InvalidInput(format!("Laplace argument must have {} finite entries", self.n())));
        }
        Ok(())
    }

    /// FELD term `[log~(exp(-u)'P^{h-k}) P^k - log~(exp(-u)'P^{h-k-1}) P^{k+1}] X_t`, k = 0..h-1.
    pub fn feld_term(&self, u: &[f64], x0: usize, h: usize, k: usize) -> Result<f64> {
        self.check_u(u)?;
        self.check_index(x0, "state")?;
        if k >= h {
            return Err(FredError::Horizon(format!("FELD term needs k < h (h={h}, k={k})")));
        }
        Ok(self.expected_log_laplace(u, x0, h - k, k)? - self.expected_log_laplace(u, x0, h - k - 1, k + 1)?)
    }

    /// FELD total `log Psi(u,h|x0) + u' P^h e_{x0}`.
    pub fn feld_total(&self, u: &[f64], x0: usize, h: usize) -> Result<f64> {
        self.check_u(u)?;
        self.check_index(x0, "state")?;
        let psi = self.laplace_row(u, h)[x0];
        if psi <= 0.0 {
            return Err(FredError::Domain("nonpositive Laplace transform".into()));
        }
        let mean: f64 = self.power(h).column(x0).iter().zip(u).map(|(p, v)| p * v).sum();
        Ok(psi.ln() + mean)
    }

    /// FELD table.
    pub fn feld_table(&self, u: &[f64], x0: usize, horizons: &[usize]) -> Result<DecompositionTable> {
        build_table(Kind::Feld, Argument::Laplace(u.to_vec()), vec![x0 as f64], horizons, IDENTITY_TOL, |h| {
            let terms = (0..h).map(|k| self.feld_term(u, x0, h, k)).collect::<Result<Vec<_>>>()?;
            Ok((terms, self.feld_total(u, x0, h)?))
        })
    }

    /// Limit distribution by powering (columns of `P^burn` from state 0).
    pub fn limit_distribution(&self, burn: usize) -> DVector<f64> {
        self.power(burn).column(0).clone_owned()
    }
}

/// Exhaustive expectation over all state paths `x0 -> x1 -> ... -> x_steps`.
///
/// `f` receives the whole path (length `steps + 1`, starting at `x0`).
pub fn enumerate_expectation<F>(chain: &MarkovChain, x0: usize, steps: usize, f: F) -> f64
where
    F: Fn(&[usize]) -> f64,
{
    fn rec<F: Fn(&[usize]) -> f64>(chain: &MarkovChain, path: &mut Vec<usize>, prob: f64, left: usize, f: &F) -> f64 {
        if left == 0 {
            return prob * f(path);
        }
        let cur = *path.last().expect("nonempty");
        let mut acc = 0.0;
        for nxt in 0..chain.n() {
            let p = chain.p[(nxt, cur)];
            if p == 0.0 {
                continue;
            }
            path.push(nxt);
            acc += rec(chain, path, prob * p, left - 1, f);
            path.pop();
        }
        acc
    }
    let mut path = vec![x0];
    rec(chain, &mut path, 1.0, steps, &f)
}

impl Simulate for MarkovChain {
    fn model_id(&self) -> &'static str {
        "markov"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != 1 || y[0] < 0.0 || y[0].fract() != 0.0 || y[0] as usize >= self.n() {
            return Err(FredError::InvalidInput(format!("chain state must be an index below {}", self.n())));
        }
        Ok(())
    }

    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let j = state[0] as usize;
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = self.n() - 1;
        for i in 0..self.n() {
            acc += self.p[(i, j)];
            if r < acc {
                next = i;
                break;
            }
        }
        (vec![next as f64], Vec::new())
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![0.0]
    }
}

impl Functional for MarkovChain {
    fn check_transform(&self, transform: &TransformSpec) -> Result<()> {
        match transform {
            TransformSpec::DensityAt(y) if y.len() == 1 => self.check_index(y[0] as usize, "evaluation"),
            TransformSpec::Laplace(u) => self.check_u(u),
            _ => Err(FredError::Unsupported("transform not available for a chain".into())),
        }
    }

    fn log_functional(&self, transform: &TransformSpec, state: &[f64], m: usize) -> Result<f64> {
        let j = state[0] as usize;
        match transform {
            TransformSpec::DensityAt(y) if m >= 1 => Ok(self.power(m)[(y[0] as usize, j)].ln()),
            TransformSpec::Laplace(u) => Ok(self.laplace_row(u, m)[j].ln()),
            _ => Err(FredError::Horizon("density functional needs m >= 1".into())),
        }
    }
}

/// Binary chain parameters: marginal `pi = P(Y=1)` and persistence `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryChainParams {
    /// Marginal probability of state 1.
    pub pi: f64,
    /// Persistence.
    pub lambda: f64,
}

impl BinaryChainParams {
    /// Validated constructor.
    pub fn new(pi: f64, lambda: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(FredError::param("pi", pi, "must lie in (0,1)"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(FredError::param("lambda", lambda, "must lie in [0,1)"));
        }
        for y in [0.0, 1.0] {
            let q = pi + lambda * (y - pi);
            if !(0.0..=1.0).contains(&q) {
                return Err(FredError::param("lambda", lambda, "transition probability leaves [0,1]"));
            }
        }
        Ok(BinaryChainParams { pi, lambda })
    }

    /// Re-validates deserialized parameters.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.pi, self.lambda)
    }

    /// `P(Y_{t+h} = 1 | Y_t = y0) = pi + lambda^h (y0 - pi)`.
    pub fn prob_one(&self, y0: f64, h: usize) -> f64 {
        self.pi + self.lambda.powi(h as i32) * (y0 - self.pi)
    }

    /// Two-state column-stochastic matrix (state 0 first).
    pub fn to_transition(&self) -> MarkovChain {
        self.h_step_matrix(1)
    }

    /// Closed-form `P^h`.
    pub fn h_step_matrix(&self, h: usize) -> MarkovChain {
        let (pi, l) = (self.pi, self.lambda.powi(h as i32));
        let p = DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - pi * (1.0 - l), 1.0 - (pi + l * (1.0 - pi)), pi * (1.0 - l), pi + l * (1.0 - pi)],
        );
        MarkovChain::new(p).expect("valid binary parameters give a stochastic matrix")
    }

    /// FEKD term at evaluation point `y = 1` in closed form.
    pub fn fekd_term(&self, y0: f64, h: usize, k: usize) -> Result<f64> {
        if h < 2 || k > h - 2 {
            return Err(FredError::Horizon(format!("FEKD term needs h >= 2 and k <= h-2 (h={h}, k={k})")));
        }
        let (pi, lam) = (self.pi, self.lambda);
        let lf = lam.powi((h - k) as i32);
        let ln = lam.powi((h - k - 1) as i32);
        let log_ratio = |l: f64| ((pi + l * (1.0 - pi)) / (pi * (1.0 - l))).ln();
        let w_far = pi + lam.powi(k as i32) * (y0 - pi);
        let w_near = pi + lam.powi(k as i32 + 1) * (y0 - pi);
        Ok(((1.0 - lf) / (1.0 - ln)).ln() + log_ratio(lf) * w_far - log_ratio(ln) * w_near)
    }

    /// FEVD term `pi(1-pi) lambda^{2(h-k-1)} (1-lambda^2) + (y0-pi) lambda^{2h-k-1} (1-2pi)(1-lambda)`.
    pub fn fevd_term(&self, y0: f64, h: usize, k: usize) -> Result<f64> {
        if k >= h {
            return Err(FredError::Horizon(format!("FEVD term needs k < h (h={h}, k={k})")));
        }
        let (pi, lam) = (self.pi, self.lambda);
        Ok(pi * (1.0 - pi) * lam.powi(2 * (h - k - 1) as i32) * (1.0 - lam * lam)
            + (y0 - pi) * lam.powi((2 * h - k - 1) as i32) * (1.0 - 2.0 * pi) * (1.0 - lam))
    }

    /// FEVD table; total is the Bernoulli variance `p_h (1 - p_h)`.
    pub fn fevd_table(&self, y0: f64, horizons: &[usize]) -> Result<DecompositionTable> {
        build_table(Kind::Fevd, Argument::VarianceEntry(0, 0), vec![y0], horizons, IDENTITY_TOL, |h| {
            let terms = (0..h).map(|k| self.fevd_term(y0, h, k)).collect::<Result<Vec<_>>>()?;
            let p = self.prob_one(y0, h);
            Ok((terms, p * (1.0 - p)))
        })
    }
}

impl Simulate for BinaryChainParams {
    fn model_id(&self) -> &'static str {
        "binary-chain"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != 1 || !(y[0] == 0.0 || y[0] == 1.0) {
            return Err(FredError::InvalidInput(format!("binary chain state must be 0 or 1, got {y:?}")));
        }
        Ok(())
    }

    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let r: f64 = rng.random();
        (vec![if r < self.prob_one(state[0], 1) { 1.0 } else { 0.0 }], Vec::new())
    }

    fn stationary_exact(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let r: f64 = rng.random();
        Some(vec![if r < self.pi { 1.0 } else { 0.0 }])
    }

    fn burn_in_start(&self) -> Vec<f64> {
        vec![0.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_binary_columns_equal() {
        let b = BinaryChainParams::new(0.3, 0.0).unwrap();
        let p = b.to_transition();
        assert_eq!(p.p().column(0), p.p().column(1));
        assert!((p.p()[(1, 0)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_columns() {
        assert!(MarkovChain::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5])).is_err());
    }

    #[test]
    fn zero_probability_is_an_error() {
        let c = MarkovChain::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.5])).unwrap();
        assert!(c.fekd_term(1, 0, 3, 0).is_err());
    }
}
