//! Scenario grids: one decomposition per (argument, state) cell plus a comparison of totals.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FredError, Result};
use crate::registry::ModelSpec;
use crate::table::{normalized_shares, DecompositionTable, Kind};

/// Scenario file contents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Model id.
    pub model: String,
    /// Model parameters; ignored when `fit` is given.
    #[serde(default)]
    pub params: Option<Value>,
    /// Path to a saved estimation result whose `theta` supplies the parameters.
    #[serde(default)]
    pub fit: Option<String>,
    /// Decomposition kind.
    pub kind: Kind,
    /// Argument grid (u, y or row-major Gamma).
    pub arguments: Vec<Vec<f64>>,
    /// State grid.
    pub states: Vec<Vec<f64>>,
    /// Largest horizon; tables cover `1..=horizon`.
    pub horizon: usize,
}

/// One evaluated cell.
#[derive(Clone, Debug)]
pub struct ScenarioCell {
    /// Cell label `u=...;y=...`.
    pub label: String,
    /// Argument.
    pub argument: Vec<f64>,
    /// State.
    pub state: Vec<f64>,
    /// Decomposition.
    pub table: DecompositionTable,
}

/// All cells, ordered argument-major.
#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    /// Cells.
    pub cells: Vec<ScenarioCell>,
    /// Horizons `1..=H`.
    pub horizons: Vec<usize>,
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl ScenarioSpec {
    /// Resolves the model, reading `fit` relative to `base_dir` when present.
    pub fn model(&self, base_dir: Option<&std::path::Path>) -> Result<ModelSpec> {
        match (&self.fit, &self.params) {
            (Some(path), _) => {
                let p = match base_dir {
                    Some(d) => d.join(path),
                    None => path.into(),
                };
                let v: Value = serde_json::from_reader(std::fs::File::open(p)?)?;
                ModelSpec::from_fit(&self.model, &v)
            }
            (None, Some(params)) => ModelSpec::from_json(&self.model, params),
            (None, None) => Err(FredError::InvalidInput("scenario needs `params` or `fit`".into())),
        }
    }
}

/// Evaluates every cell in parallel; output order follows the grids.
pub fn run_scenario(spec: &ScenarioSpec, model: &ModelSpec) -> Result<ScenarioOutput> {
    if spec.arguments.is_empty() || spec.states.is_empty() {
        return Err(FredError::InvalidInput("scenario grids must be nonempty".into()));
    }
    if spec.horizon == 0 {
        return Err(FredError::Horizon("scenario horizon must be >= 1".into()));
    }
    let horizons: Vec<usize> = (1..=spec.horizon).collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = spec
        .arguments
        .iter()
        .flat_map(|a| spec.states.iter().map(move |s| (a.clone(), s.clone())))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(a, s)| {
            let table = model.decompose(spec.kind, &a, &s, &horizons).map_err(|e| match e {
                FredError::Domain(m) => FredError::Domain(format!("cell arg={a:?} state={s:?}: {m}")),
                other => other,
            })?;
            Ok(ScenarioCell { label: format!("arg={};state={}", fmt_vec(&a), fmt_vec(&s)), argument: a, state: s, table })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioOutput { cells, horizons })
}

impl ScenarioOutput {
    /// Totals per horizon, one column per cell: `h,<label1>,<label2>,...`.
    pub fn write_comparison_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["h".to_string()];
        header.extend(self.cells.iter().map(|c| c.label.clone()));
        wr.write_record(&header)?;
        for &h in &self.horizons {
            let mut rec = vec![h.to_string()];
            rec.extend(self.cells.iter().map(|c| format!("{:.12}", c.table.total(h).unwrap_or(f64::NAN))));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Long-format shares `cell,h,k,share`.
    pub fn write_shares_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cell", "h", "k", "share"])?;
        for c in &self.cells {
            for ((k, h), s) in normalized_shares(&c.table)? {
                wr.write_record([c.label.clone(), h.to_string(), k.to_string(), format!("{s:.12}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}
