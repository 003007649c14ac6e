//! Decomposition tables: the common output of every FEKD/FELD/FEVD engine.
//!
//! A table stores the terms `gamma(k,h)` in a flat map keyed by `(h,k)`, the totals
//! `gamma(h)`, and the residual `gamma(h) - sum_k gamma(k,h)` recorded at assembly.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FredError, Result};

/// Default relative tolerance for the table identity.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Which decomposition a table holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Kullback (transition density) decomposition, k = 0..h-2.
    Fekd,
    /// Laplace decomposition, k = 0..h-1.
    Feld,
    /// Variance decomposition, k = 0..h-1.
    Fevd,
}

impl Kind {
    /// Inclusive k-range at horizon `h`, `None` when the sum is empty.
    pub fn term_range(self, h: usize) -> Option<(usize, usize)> {
        match self {
            Kind::Fekd if h >= 2 => Some((0, h - 2)),
            Kind::Fekd => None,
            Kind::Feld | Kind::Fevd if h >= 1 => Some((0, h - 1)),
            _ => None,
        }
    }

    /// Parses `fekd`, `feld` or `fevd`.
    pub fn parse(s: &str) -> Result<Kind> {
        match s.to_ascii_lowercase().as_str() {
            "fekd" => Ok(Kind::Fekd),
            "feld" => Ok(Kind::Feld),
            "fevd" => Ok(Kind::Fevd),
            other => Err(FredError::InvalidInput(format!("unknown decomposition kind `{other}`"))),
        }
    }
}

/// The argument indexing a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Argument {
    /// Laplace argument `u`.
    Laplace(Vec<f64>),
    /// Density evaluation point `y`.
    DensityAt(Vec<f64>),
    /// Matrix Laplace argument `Gamma`, row-major.
    MatrixLaplace(Vec<f64>),
    /// Entry `(i, j)` of the conditional variance matrix (FEVD tables).
    VarianceEntry(usize, usize),
}

/// Terms, totals and residuals of one decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionTable {
    /// Decomposition kind.
    pub kind: Kind,
    /// Argument (u, y, Gamma or variance entry).
    pub argument: Argument,
    /// Conditioning state `Y_t`, flattened.
    pub state: Vec<f64>,
    terms: BTreeMap<(usize, usize), f64>,
    totals: BTreeMap<usize, f64>,
    residuals: BTreeMap<usize, f64>,
}

impl DecompositionTable {
    /// Horizons covered, ascending.
    pub fn horizons(&self) -> Vec<usize> {
        self.totals.keys().copied().collect()
    }

    /// `gamma(k,h)` if stored.
    pub fn term(&self, k: usize, h: usize) -> Option<f64> {
        self.terms.get(&(h, k)).copied()
    }

    /// `gamma(h)` if stored.
    pub fn total(&self, h: usize) -> Option<f64> {
        self.totals.get(&h).copied()
    }

    /// Recorded `gamma(h) - sum_k gamma(k,h)`.
    pub fn residual(&self, h: usize) -> Option<f64> {
        self.residuals.get(&h).copied()
    }

    /// Terms at horizon `h` in k order.
    pub fn terms_at(&self, h: usize) -> Vec<f64> {
        self.terms.range((h, 0)..(h + 1, 0)).map(|(_, v)| *v).collect()
    }

    /// Inclusive k-range at horizon `h`.
    pub fn term_range(&self, h: usize) -> Option<(usize, usize)> {
        self.kind.term_range(h)
    }

    /// All `((k,h), value)` pairs ordered by h then k.
    pub fn iter_terms(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.terms.iter().map(|(&(h, k), &v)| ((k, h), v))
    }

    /// Smallest stored term or total (for nonnegativity checks).
    pub fn min_value(&self) -> f64 {
        self.terms
            .values()
            .chain(self.totals.values())
            .fold(f64::INFINITY, |a, b| a.min(*b))
    }

    /// Largest absolute relative residual.
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals
            .iter()
            .map(|(h, r)| r.abs() / self.totals[h].abs().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Writes the `h,k,term,total,share` CSV. Horizons with an empty sum get one row
    /// with blank `k`, `term` and `share`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let shares = normalized_shares(self).ok();
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["h", "k", "term", "total", "share"])?;
        for (&h, &total) in &self.totals {
            let ts: Vec<_> = self.terms.range((h, 0)..(h + 1, 0)).collect();
            if ts.is_empty() {
                wr.write_record([h.to_string(), String::new(), String::new(), fmt(total), String::new()])?;
            }
            for (&(_, k), &v) in ts {
                let share = shares
                    .as_ref()
                    .and_then(|s| s.get(&(k, h)))
                    .map(|s| fmt(*s))
                    .unwrap_or_default();
                wr.write_record([h.to_string(), k.to_string(), fmt(v), fmt(total), share])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv) back into a table.
    pub fn read_csv<R: Read>(r: R, kind: Kind, argument: Argument, state: Vec<f64>, tol: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut terms = BTreeMap::new();
        let mut totals = BTreeMap::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| FredError::Data { row: i + 1, reason: format!("bad {what}") };
            let h: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad("h"))?;
            let total: f64 = rec.get(3).unwrap_or("").parse().map_err(|_| bad("total"))?;
            totals.insert(h, total);
            let k = rec.get(1).unwrap_or("");
            if !k.is_empty() {
                let k: usize = k.parse().map_err(|_| bad("k"))?;
                let v: f64 = rec.get(2).unwrap_or("").parse().map_err(|_| bad("term"))?;
                terms.insert((k, h), v);
            }
        }
        assemble_table(kind, argument, state, terms, totals, tol)
    }

    /// JSON form `{argument, state, kind, terms:[{h,k,value}], totals:[{h,value}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let j = TableJson {
            argument: self.argument.clone(),
            state: self.state.clone(),
            kind: self.kind,
            terms: self
                .terms
                .iter()
                .map(|(&(h, k), &value)| TermJson { h, k, value })
                .collect(),
            totals: self.totals.iter().map(|(&h, &value)| TotalJson { h, value }).collect(),
        };
        serde_json::to_value(j).expect("table serializes")
    }

    /// Inverse of [`to_json`](Self::to_json); re-validates the identity at `tol`.
    pub fn from_json(v: &serde_json::Value, tol: f64) -> Result<Self> {
        let j: TableJson = serde_json::from_value(v.clone())?;
        let terms = j.terms.iter().map(|t| ((t.k, t.h), t.value)).collect();
        let totals = j.totals.iter().map(|t| (t.h, t.value)).collect();
        assemble_table(j.kind, j.argument, j.state, terms, totals, tol)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    h: usize,
    k: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TotalJson {
    h: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    argument: Argument,
    state: Vec<f64>,
    kind: Kind,
    terms: Vec<TermJson>,
    totals: Vec<TotalJson>,
}

/// Validates terms (keyed `(k,h)`) and totals and builds a table.
///
/// Every horizon in `totals` must carry exactly the k-range of `kind`; all values must be
/// finite; and `|gamma(h) - sum_k gamma(k,h)| <= tol * max(1, |gamma(h)|)`.
pub fn assemble_table(
    kind: Kind,
    argument: Argument,
    state: Vec<f64>,
    terms: BTreeMap<(usize, usize), f64>,
    totals: BTreeMap<usize, f64>,
    tol: f64,
) -> Result<DecompositionTable> {
    if totals.is_empty() {
        return Err(FredError::Horizon("no horizons supplied".into()));
    }
    let mut by_h: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(k, h), &v) in &terms {
        if !v.is_finite() {
            return Err(FredError::NonFinite { k, h });
        }
        if !totals.contains_key(&h) {
            return Err(FredError::Horizon(format!("term (k={k}, h={h}) has no total")));
        }
        match kind.term_range(h) {
            Some((lo, hi)) if k >= lo && k <= hi => {}
            _ => {
                return Err(FredError::Horizon(format!(
                    "term (k={k}, h={h}) outside the {kind:?} range"
                )))
            }
        }
        by_h.insert((h, k), v);
    }
    let mut residuals = BTreeMap::new();
    for (&h, &total) in &totals {
        if h == 0 {
            return Err(FredError::Horizon("horizon must be >= 1".into()));
        }
        if !total.is_finite() {
            return Err(FredError::NonFinite { k: usize::MAX, h });
        }
        let mut sum = 0.0;
        if let Some((lo, hi)) = kind.term_range(h) {
            for k in lo..=hi {
                match by_h.get(&(h, k)) {
                    Some(v) => sum += v,
                    None => return Err(FredError::Horizon(format!("missing term (k={k}, h={h})"))),
                }
            }
        }
        let residual = total - sum;
        if residual.abs() > tol * total.abs().max(1.0) {
            return Err(FredError::Residual { h, residual });
        }
        residuals.insert(h, residual);
    }
    Ok(DecompositionTable {
        kind,
        argument,
        state,
        terms: by_h,
        totals,
        residuals,
    })
}

/// Builds a table from a per-horizon closure returning `(terms in k order, total)`.
pub fn build_table<F>(
    kind: Kind,
    argument: Argument,
    state: Vec<f64>,
    horizons: &[usize],
    tol: f64,
    mut f: F,
) -> Result<DecompositionTable>
where
    F: FnMut(usize) -> Result<(Vec<f64>, f64)>,
{
    let mut terms = BTreeMap::new();
    let mut totals = BTreeMap::new();
    for &h in horizons {
        let (ts, total) = f(h)?;
        let expected = kind.term_range(h).map_or(0, |(lo, hi)| hi + 1 - lo);
        if ts.len() != expected {
            return Err(FredError::Horizon(format!(
                "engine returned {} terms at h={h}, expected {expected}",
                ts.len()
            )));
        }
        for (k, v) in ts.into_iter().enumerate() {
            terms.insert((k, h), v);
        }
        totals.insert(h, total);
    }
    assemble_table(kind, argument, state, terms, totals, tol)
}

/// Shares `gamma(k,h) / sum_k gamma(k,h)`, keyed `(k,h)`.
///
/// Normalizing by the term sum rather than the stored total makes each horizon sum to
/// one up to rounding; the two differ by at most the recorded residual.
pub fn normalized_shares(table: &DecompositionTable) -> Result<BTreeMap<(usize, usize), f64>> {
    let mut out = BTreeMap::new();
    for h in table.horizons() {
        let ts = table.terms_at(h);
        if ts.is_empty() {
            continue;
        }
        let sum: f64 = ts.iter().sum();
        if sum == 0.0 || !sum.is_finite() {
            return Err(FredError::ZeroTotal(h));
        }
        for (k, v) in ts.iter().enumerate() {
            out.insert((k, h), v / sum);
        }
    }
    Ok(out)
}
