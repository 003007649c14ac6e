//! Count-series ingestion, summary statistics and Gaussian rank transforms.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

pub use chrono::NaiveDate;
use chrono::{Days, Months};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FredError, Result};

/// Declared sampling frequency; consecutive dates must be exactly one period apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    /// One day.
    Daily,
    /// Seven days.
    Weekly,
    /// One calendar month.
    Monthly,
    /// Three calendar months.
    Quarterly,
    /// Twelve calendar months.
    Annual,
}

impl Frequency {
    /// Date one period after `d`.
    pub fn next(&self, d: NaiveDate) -> Option<NaiveDate> {
        match self {
            Frequency::Daily => d.checked_add_days(Days::new(1)),
            Frequency::Weekly => d.checked_add_days(Days::new(7)),
            Frequency::Monthly => d.checked_add_months(Months::new(1)),
            Frequency::Quarterly => d.checked_add_months(Months::new(3)),
            Frequency::Annual => d.checked_add_months(Months::new(12)),
        }
    }
}

impl FromStr for Frequency {
    type Err = FredError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" | "d" => Ok(Frequency::Daily),
            "weekly" | "w" => Ok(Frequency::Weekly),
            "monthly" | "m" => Ok(Frequency::Monthly),
            "quarterly" | "q" => Ok(Frequency::Quarterly),
            "annual" | "yearly" | "a" | "y" => Ok(Frequency::Annual),
            other => Err(FredError::InvalidInput(format!("unknown frequency `{other}`"))),
        }
    }
}

/// Regularly spaced multivariate count series.
#[derive(Clone, Debug, PartialEq)]
pub struct CountSeries {
    /// Observation dates, strictly increasing at the declared frequency.
    pub dates: Vec<NaiveDate>,
    /// `values[t][j]`, nonnegative integers stored as `f64`.
    pub values: Vec<Vec<f64>>,
    /// Column names.
    pub labels: Vec<String>,
    /// Declared frequency.
    pub frequency: Frequency,
}

/// Per-column moments: mean, variance, skewness, excess kurtosis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnSummary {
    /// Column name.
    pub label: String,
    /// Sample mean.
    pub mean: f64,
    /// Sample variance (denominator `T - 1`).
    pub variance: f64,
    /// Moment skewness `m3 / m2^{3/2}`.
    pub skewness: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`.
    pub excess_kurtosis: f64,
    /// Number of zero counts.
    pub zeros: usize,
}

impl CountSeries {
    /// Reads and validates `date,label1,...,labelm` CSV from a file.
    pub fn ingest<P: AsRef<Path>>(path: P, frequency: Frequency) -> Result<Self> {
        Self::from_reader(File::open(path)?, frequency)
    }

    /// Reads and validates CSV. Row numbers in errors are one-based data rows.
    pub fn from_reader<R: Read>(r: R, frequency: Frequency) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() < 2 {
            return Err(FredError::InvalidInput("header must be `date,label1,...`".into()));
        }
        if !header[0].eq_ignore_ascii_case("date") {
            return Err(FredError::InvalidInput(format!("first column must be `date`, got `{}`", &header[0])));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| FredError::Data { row, reason: e.to_string() })?;
            if rec.len() != header.len() {
                return Err(FredError::Data { row, reason: format!("expected {} cells, got {}", header.len(), rec.len()) });
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| FredError::Data { row, reason: format!("bad date `{}`: {e}", &rec[0]) })?;
            if let Some(prev) = dates.last() {
                let expected = frequency.next(*prev);
                if expected != Some(date) {
                    let reason = if date <= *prev {
                        format!("date {date} is not after {prev}")
                    } else {
                        format!("gap: expected {}, found {date}", expected.map(|d| d.to_string()).unwrap_or_default())
                    };
                    return Err(FredError::Data { row, reason });
                }
            }
            let mut vals = Vec::with_capacity(labels.len());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                if cell.is_empty() {
                    return Err(FredError::Data { row, reason: format!("missing value in `{}`", labels[j]) });
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| FredError::Data { row, reason: format!("`{cell}` in `{}` is not a number", labels[j]) })?;
                if v < 0.0 {
                    return Err(FredError::Data { row, reason: format!("negative count {v} in `{}`", labels[j]) });
                }
                if v.fract() != 0.0 || !v.is_finite() {
                    return Err(FredError::Data { row, reason: format!("non-integer count {v} in `{}`", labels[j]) });
                }
                vals.push(v);
            }
            dates.push(date);
            values.push(vals);
        }
        if values.is_empty() {
            return Err(FredError::InvalidInput("no data rows".into()));
        }
        Ok(CountSeries { dates, values, labels, frequency })
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether the series has no observations.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of columns.
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// One column.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Index of a column by label or zero-based position.
    pub fn column_index(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.labels.iter().position(|l| l == key) {
            return Ok(i);
        }
        match key.parse::<usize>() {
            Ok(i) if i < self.dim() => Ok(i),
            _ => Err(FredError::InvalidInput(format!("no column `{key}`"))),
        }
    }

    /// Moments per column.
    pub fn summary(&self) -> Vec<ColumnSummary> {
        (0..self.dim())
            .map(|j| {
                let x = self.column(j);
                let n = x.len() as f64;
                let mean = x.iter().sum::<f64>() / n;
                let m = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
                let (m2, m3, m4) = (m(2), m(3), m(4));
                ColumnSummary {
                    label: self.labels[j].clone(),
                    mean,
                    variance: if x.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 },
                    skewness: m3 / m2.powf(1.5),
                    excess_kurtosis: m4 / (m2 * m2) - 3.0,
                    zeros: x.iter().filter(|v| **v == 0.0).count(),
                }
            })
            .collect()
    }

    /// Writes the series in the ingestion format.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        wr.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Builds a series from simulated rows with dates starting at `start`.
    pub fn from_rows(start: NaiveDate, frequency: Frequency, labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut dates = Vec::with_capacity(values.len());
        let mut d = start;
        for (i, row) in values.iter().enumerate() {
            if row.len() != labels.len() {
                return Err(FredError::Data { row: i + 1, reason: "row width differs from labels".into() });
            }
            if row.iter().any(|v| !(*v >= 0.0) || v.fract() != 0.0) {
                return Err(FredError::Data { row: i + 1, reason: format!("{row:?} are not nonnegative integers") });
            }
            dates.push(d);
            d = frequency.next(d).ok_or_else(|| FredError::InvalidInput("date overflow".into()))?;
        }
        Ok(CountSeries { dates, values, labels, frequency })
    }
}

/// Writes per-column summaries as CSV.
pub fn write_summary_csv<W: Write>(rows: &[ColumnSummary], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["process", "mean", "variance", "skewness", "excess_kurtosis", "zeros"])?;
    for r in rows {
        wr.write_record([
            r.label.clone(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.variance),
            format!("{:.6}", r.skewness),
            format!("{:.6}", r.excess_kurtosis),
            r.zeros.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            ranks[p] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `Phi^{-1}(Rank / (T + 1))` with average ranks for ties.
pub fn gaussian_ranks(x: &[f64]) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let t = x.len() as f64;
    average_ranks(x).into_iter().map(|r| n.inverse_cdf(r / (t + 1.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn monthly_spacing_accepts_month_ends_clamped() {
        let csv = "date,a\n2020-01-31,1\n2020-02-29,2\n";
        // Jan 31 + 1 month clamps to Feb 29 in a leap year.
        assert!(CountSeries::from_reader(csv.as_bytes(), Frequency::Monthly).is_ok());
    }
}
