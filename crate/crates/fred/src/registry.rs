//! Model registry: builds any supported model from an id and JSON parameters and routes
//! decomposition requests to the matching engine.

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{FredError, Result};
use crate::linalg::square_from_row_major;
use crate::models::arg::ArgParams;
use crate::models::binbar::BiNbarParams;
use crate::models::cauchy::CauchyArModel;
use crate::models::gauss_var::{GaussVarJson, GaussianVarModel};
use crate::models::inar::InarParams;
use crate::models::markov::{BinaryChainParams, MarkovChain, MarkovJson};
use crate::models::nbar::NbarParams;
use crate::models::war::{WarJson, WarParams};
use crate::quad::QuadSpec;
use crate::sim::Simulate;
use crate::table::{DecompositionTable, Kind};

/// Registered model ids.
pub const MODEL_IDS: [&str; 9] = ["inar", "arg", "nbar", "nbar2", "gauss-var", "markov", "binary-chain", "war", "cauchy"];

/// A validated model instance.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    /// INAR(1).
    Inar(InarParams),
    /// ARG(1).
    Arg(ArgParams),
    /// Univariate NBAR.
    Nbar(NbarParams),
    /// Bivariate NBAR.
    Nbar2(BiNbarParams),
    /// Gaussian VAR(1).
    GaussVar(GaussianVarModel),
    /// Finite Markov chain with states labelled `0..n-1`.
    Markov(MarkovChain),
    /// Binary `{0,1}` chain.
    BinaryChain(BinaryChainParams),
    /// WAR(1).
    War(WarParams),
    /// Cauchy AR(1).
    Cauchy(CauchyArModel),
}

fn parse<T: serde::de::DeserializeOwned>(id: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| FredError::InvalidInput(format!("{id} parameters: {e}")))
}

impl ModelSpec {
    /// Builds and validates a model from its id and JSON parameters.
    pub fn from_json(id: &str, params: &Value) -> Result<Self> {
        Ok(match id {
            "inar" => ModelSpec::Inar(parse::<InarParams>(id, params)?.validated()?),
            "arg" => ModelSpec::Arg(parse::<ArgParams>(id, params)?.validated()?),
            "nbar" => ModelSpec::Nbar(parse::<NbarParams>(id, params)?.validated()?),
            "nbar2" => ModelSpec::Nbar2(parse::<BiNbarParams>(id, params)?.validated()?),
            "gauss-var" => ModelSpec::GaussVar(GaussianVarModel::from_json(&parse::<GaussVarJson>(id, params)?)?),
            "markov" => ModelSpec::Markov(MarkovChain::from_json(&parse::<MarkovJson>(id, params)?)?),
            "binary-chain" => ModelSpec::BinaryChain(parse::<BinaryChainParams>(id, params)?.validated()?),
            "war" => ModelSpec::War(WarParams::from_json(&parse::<WarJson>(id, params)?)?),
            "cauchy" => ModelSpec::Cauchy(parse::<CauchyArModel>(id, params)?.validated()?),
            other => {
                return Err(FredError::InvalidInput(format!("unknown model `{other}`; expected one of {MODEL_IDS:?}")))
            }
        })
    }

    /// Builds a model from the `theta` object of a saved estimation result.
    pub fn from_fit(id: &str, fit: &Value) -> Result<Self> {
        let theta = fit
            .get("theta")
            .ok_or_else(|| FredError::InvalidInput("fit file has no `theta` object".into()))?;
        Self::from_json(id, theta)
    }

    /// Model id.
    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::Inar(_) => "inar",
            ModelSpec::Arg(_) => "arg",
            ModelSpec::Nbar(_) => "nbar",
            ModelSpec::Nbar2(_) => "nbar2",
            ModelSpec::GaussVar(_) => "gauss-var",
            ModelSpec::Markov(_) => "markov",
            ModelSpec::BinaryChain(_) => "binary-chain",
            ModelSpec::War(_) => "war",
            ModelSpec::Cauchy(_) => "cauchy",
        }
    }

    /// The model as a path sampler.
    pub fn as_simulate(&self) -> &dyn Simulate {
        match self {
            ModelSpec::Inar(m) => m,
            ModelSpec::Arg(m) => m,
            ModelSpec::Nbar(m) => m,
            ModelSpec::Nbar2(m) => m,
            ModelSpec::GaussVar(m) => m,
            ModelSpec::Markov(m) => m,
            ModelSpec::BinaryChain(m) => m,
            ModelSpec::War(m) => m,
            ModelSpec::Cauchy(m) => m,
        }
    }

    /// Decomposition table of `kind` at argument `arg` and state `state`.
    ///
    /// `arg` is `u` for FELD, the evaluation point `y` for FEKD, and an optional variance
    /// entry `[i, j]` for FEVD (default `[0, 0]`). Matrix arguments and states (WAR) are
    /// row-major.
    pub fn decompose(&self, kind: Kind, arg: &[f64], state: &[f64], horizons: &[usize]) -> Result<DecompositionTable> {
        if horizons.is_empty() {
            return Err(FredError::Horizon("no horizons requested".into()));
        }
        let unsupported = |why: &str| Err(FredError::Unsupported(format!("{} does not support {kind:?}: {why}", self.id())));
        match (self, kind) {
            (ModelSpec::Inar(m), Kind::Feld) => m.feld_table(scalar(arg, "u")?, scalar(state, "state")?, horizons),
            (ModelSpec::Arg(m), Kind::Feld) => m.feld_table(scalar(arg, "u")?, scalar(state, "state")?, horizons),
            (ModelSpec::Nbar(m), Kind::Feld) => m.feld_table(scalar(arg, "u")?, scalar(state, "state")?, horizons),
            (ModelSpec::Nbar2(m), Kind::Feld) => m.feld_table(arg, state, horizons),
            (ModelSpec::Inar(m), Kind::Fevd) => m.affine()?.fevd_table(state, horizons, entry(arg, 1)?),
            (ModelSpec::Arg(m), Kind::Fevd) => m.affine()?.fevd_table(state, horizons, entry(arg, 1)?),
            (ModelSpec::Nbar(m), Kind::Fevd) => m.affine()?.fevd_table(state, horizons, entry(arg, 1)?),
            (ModelSpec::Nbar2(m), Kind::Fevd) => m.affine()?.fevd_table(state, horizons, entry(arg, 2)?),
            (ModelSpec::Inar(_) | ModelSpec::Arg(_) | ModelSpec::Nbar(_) | ModelSpec::Nbar2(_), Kind::Fekd) => {
                unsupported("no closed-form multi-step transition density is available")
            }
            (ModelSpec::GaussVar(m), Kind::Feld) => m.feld_table(arg, state, horizons),
            (ModelSpec::GaussVar(m), Kind::Fekd) => m.fekd_table(arg, state, horizons),
            (ModelSpec::GaussVar(m), Kind::Fevd) => m.fevd_table(state, horizons, entry(arg, m.dim())?),
            (ModelSpec::Markov(m), Kind::Fekd) => m.fekd_table(index(arg, m.n(), "y")?, index(state, m.n(), "state")?, horizons),
            (ModelSpec::Markov(m), Kind::Feld) => {
                m.feld_table(&state_laplace(arg, m.n())?, index(state, m.n(), "state")?, horizons)
            }
            (ModelSpec::Markov(_), Kind::Fevd) => unsupported("state labels carry no metric; use binary-chain for {0,1} chains"),
            (ModelSpec::BinaryChain(m), Kind::Fevd) => m.fevd_table(binary_state(state)?, horizons),
            (ModelSpec::BinaryChain(m), Kind::Fekd) => {
                m.to_transition().fekd_table(index(arg, 2, "y")?, binary_state(state)? as usize, horizons)
            }
            (ModelSpec::BinaryChain(m), Kind::Feld) => {
                m.to_transition().feld_table(&state_laplace(arg, 2)?, binary_state(state)? as usize, horizons)
            }
            (ModelSpec::War(m), Kind::Feld) => {
                let gamma = square_from_row_major(arg)?;
                let y0 = square_from_row_major(state)?;
                check_dim(&gamma, m.dim(), "Gamma")?;
                check_dim(&y0, m.dim(), "state")?;
                m.feld_table(&gamma, &y0, horizons)
            }
            (ModelSpec::War(_), _) => unsupported("only the matrix Laplace (FELD) decomposition is implemented"),
            (ModelSpec::Cauchy(m), Kind::Fekd) => {
                m.fekd_table(scalar(arg, "y")?, scalar(state, "state")?, horizons, &QuadSpec::default())
            }
            (ModelSpec::Cauchy(m), Kind::Fevd) => {
                m.fevd(horizons[0])?;
                unsupported("Cauchy AR(1) has no variance")
            }
            (ModelSpec::Cauchy(_), Kind::Feld) => unsupported("the Laplace transform of a Cauchy variable is infinite"),
        }
    }
}

fn scalar(v: &[f64], what: &str) -> Result<f64> {
    match v {
        [x] => Ok(*x),
        _ => Err(FredError::InvalidInput(format!("{what} must be a single number, got {v:?}"))),
    }
}

fn index(v: &[f64], n: usize, what: &str) -> Result<usize> {
    let x = scalar(v, what)?;
    if x < 0.0 || x.fract() != 0.0 || x as usize >= n {
        return Err(FredError::InvalidInput(format!("{what} must be a state index in 0..{n}, got {x}")));
    }
    Ok(x as usize)
}

fn binary_state(v: &[f64]) -> Result<f64> {
    Ok(index(v, 2, "state")? as f64)
}

/// Scalar `u` means state values `0..n-1` (`u_s = u s`); a length-`n` vector gives
/// per-state Laplace weights directly.
fn state_laplace(arg: &[f64], n: usize) -> Result<Vec<f64>> {
    match arg.len() {
        1 => Ok((0..n).map(|s| arg[0] * s as f64).collect()),
        l if l == n => Ok(arg.to_vec()),
        l => Err(FredError::InvalidInput(format!("Laplace argument must have 1 or {n} entries, got {l}"))),
    }
}

fn entry(arg: &[f64], dim: usize) -> Result<(usize, usize)> {
    let (i, j) = match arg {
        [] => (0.0, 0.0),
        [i, j] => (*i, *j),
        _ => return Err(FredError::InvalidInput(format!("FEVD argument is a variance entry `i,j`, got {arg:?}"))),
    };
    for x in [i, j] {
        if x < 0.0 || x.fract() != 0.0 || x as usize >= dim {
            return Err(FredError::InvalidInput(format!("variance entry index {x} out of range 0..{dim}")));
        }
    }
    Ok((i as usize, j as usize))
}

fn check_dim(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n {
        return Err(FredError::InvalidInput(format!("{what} must be {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Limiting INAR FELD grid `lambda/(1-p)(u - 1 + e^{-u})`: rows follow `rho_grid`,
/// columns follow `u_grid`.
pub fn table1(lambda: f64, rho_grid: &[f64], u_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if rho_grid.is_empty() || u_grid.is_empty() {
        return Err(FredError::InvalidInput("empty grid".into()));
    }
    rho_grid
        .iter()
        .map(|&p| {
            let m = InarParams::new(p, lambda)?;
            u_grid.iter().map(|&u| m.feld_limit(u)).collect()
        })
        .collect()
}

/// Default `p` grid `0.05, 0.15, ..., 0.95`.
pub fn table1_rho_grid() -> Vec<f64> {
    (0..10).map(|i| (2 * i + 1) as f64 / 20.0).collect()
}

/// Default `u` grid `0.1, 0.4, ..., 2.8`.
pub fn table1_u_grid() -> Vec<f64> {
    (0..10).map(|i| (1 + 3 * i) as f64 / 10.0).collect()
}

/// Writes the grid in long format `rho,u,value,rounded`.
pub fn write_table1_csv<W: std::io::Write>(rho: &[f64], u: &[f64], grid: &[Vec<f64>], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["rho", "u", "value", "rounded"])?;
    for (i, r) in rho.iter().enumerate() {
        for (j, uu) in u.iter().enumerate() {
            let v = grid[i][j];
            wr.write_record([format!("{r}"), format!("{uu}"), format!("{v:.12}"), format!("{v:.2}")])?;
        }
    }
    wr.flush()?;
    Ok(())
}
