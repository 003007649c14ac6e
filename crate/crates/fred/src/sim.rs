//! Seeded exact-transition samplers.
//!
//! Every path draws from its own ChaCha stream selected by `(seed, path index)`, so a
//! path set is identical whatever the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FredError, Result};

/// Default burn-in for stationary draws without a closed-form marginal.
pub const BURN_IN: usize = 1000;

/// Random stream for one path.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// A Markov model with an exact one-step sampler.
pub trait Simulate: Sync {
    /// Registry id.
    fn model_id(&self) -> &'static str;

    /// Length of the flattened state.
    fn state_len(&self) -> usize;

    /// Validates a conditioning state.
    fn check_state(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.state_len() {
            return Err(FredError::InvalidInput(format!(
                "{}: state has length {}, expected {}",
                self.model_id(),
                y.len(),
                self.state_len()
            )));
        }
        Ok(())
    }

    /// Draws `Y_{t+1}` given `Y_t = state`; also returns latent variables if any.
    fn step_latent(&self, state: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);

    /// Draws `Y_{t+1}` given `Y_t = state`.
    fn step(&self, state: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.step_latent(state, rng).0
    }

    /// Exact draw from the stationary law when one is available.
    fn stationary_exact(&self, _rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        None
    }

    /// Starting point for burn-in.
    fn burn_in_start(&self) -> Vec<f64>;
}

/// Simulated paths in memory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSet {
    /// Registry id of the generating model.
    pub model: String,
    /// Number of paths.
    pub n_paths: usize,
    /// Steps simulated after the initial state.
    pub horizon: usize,
    /// Base seed.
    pub seed: u64,
    /// `paths[p][t]` is the state at time t (t = 0 is `y0`).
    pub paths: Vec<Vec<Vec<f64>>>,
    /// Latent variables drawn at each step (`latent[p][t-1]`), when requested.
    pub latent: Option<Vec<Vec<Vec<f64>>>>,
}

impl PathSet {
    /// Long-format CSV `path,t,component,value`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["path", "t", "component", "value"])?;
        for (p, path) in self.paths.iter().enumerate() {
            for (t, state) in path.iter().enumerate() {
                for (c, v) in state.iter().enumerate() {
                    wr.write_record([p.to_string(), t.to_string(), c.to_string(), format!("{v:.17e}")])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the long-format CSV back (metadata supplied by the caller).
    pub fn read_csv<R: std::io::Read>(r: R, model: &str, seed: u64) -> Result<PathSet> {
        let mut rd = csv::Reader::from_reader(r);
        let mut paths: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| FredError::Data { row: i + 1, reason: format!("bad {what}") };
            let p: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad("path"))?;
            let t: usize = rec.get(1).unwrap_or("").parse().map_err(|_| bad("t"))?;
            let c: usize = rec.get(2).unwrap_or("").parse().map_err(|_| bad("component"))?;
            let v: f64 = rec.get(3).unwrap_or("").parse().map_err(|_| bad("value"))?;
            if p >= paths.len() {
                paths.resize(p + 1, Vec::new());
            }
            if t >= paths[p].len() {
                paths[p].resize(t + 1, Vec::new());
            }
            if c != paths[p][t].len() {
                return Err(bad("component order"));
            }
            paths[p][t].push(v);
        }
        let horizon = paths.first().map_or(0, |p| p.len().saturating_sub(1));
        Ok(PathSet {
            model: model.to_string(),
            n_paths: paths.len(),
            horizon,
            seed,
            paths,
            latent: None,
        })
    }
}

/// Simulates `n_paths` paths of length `horizon` from `y0`.
pub fn simulate(
    model: &dyn Simulate,
    y0: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
    keep_latent: bool,
) -> Result<PathSet> {
    model.check_state(y0)?;
    if horizon == 0 {
        return Err(FredError::Horizon("simulation horizon must be >= 1".into()));
    }
    let runs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut states = Vec::with_capacity(horizon + 1);
            let mut lat = Vec::with_capacity(if keep_latent { horizon } else { 0 });
            states.push(y0.to_vec());
            for t in 0..horizon {
                let (next, l) = model.step_latent(&states[t], &mut rng);
                if keep_latent {
                    lat.push(l);
                }
                states.push(next);
            }
            (states, lat)
        })
        .collect();
    let (paths, latent): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(PathSet {
        model: model.model_id().to_string(),
        n_paths,
        horizon,
        seed,
        paths,
        latent: keep_latent.then_some(latent),
    })
}

/// One long path of length `t_obs` started from a stationary draw.
pub fn simulate_series(model: &dyn Simulate, t_obs: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = path_rng(seed, 0);
    let mut cur = start_stationary(model, &mut rng, BURN_IN);
    let mut out = Vec::with_capacity(t_obs);
    for _ in 0..t_obs {
        out.push(cur.clone());
        cur = model.step(&cur, &mut rng);
    }
    out
}

fn start_stationary(model: &dyn Simulate, rng: &mut ChaCha8Rng, burn_in: usize) -> Vec<f64> {
    if let Some(s) = model.stationary_exact(rng) {
        return s;
    }
    let mut cur = model.burn_in_start();
    for _ in 0..burn_in {
        cur = model.step(&cur, rng);
    }
    cur
}

/// `n` independent draws from the stationary law (exact where available, else burn-in).
pub fn stationary_draw(model: &dyn Simulate, n: usize, seed: u64, burn_in: usize) -> Vec<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            start_stationary(model, &mut rng, burn_in)
        })
        .collect()
}

/// States at `t + h` for `n` paths from `y0`.
pub fn terminal_states(model: &dyn Simulate, y0: &[f64], h: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut cur = y0.to_vec();
            for _ in 0..h {
                cur = model.step(&cur, &mut rng);
            }
            cur
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
