//! Results CSV schema, cell summaries and rate-fit output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{fit_rate, RateFit, RateObservation, ValueKind};

/// One method x replication measurement; one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma: f64,
    pub theta: Option<f64>,
    #[serde(rename = "I")]
    pub repeats: Option<usize>,
    pub k: usize,
    pub rep: usize,
    pub risk: f64,
    pub regret: Option<f64>,
    pub cis: Option<f64>,
    pub train_ms: f64,
    pub predict_ms: f64,
    pub seed: u64,
}

impl MetricsReport {
    fn sort_key(&self) -> (String, u64, usize, u64, usize, usize) {
        (
            self.method.clone(),
            self.gamma.to_bits(),
            self.n,
            self.theta.map_or(0, f64::to_bits),
            self.repeats.unwrap_or(0),
            self.rep,
        )
    }
}

/// Orders rows by (method, gamma, N, theta, I, rep).
pub fn sort_rows(rows: &mut [MetricsReport]) {
    rows.sort_by_key(MetricsReport::sort_key);
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(e.to_string())
}

pub fn write_results<W: Write>(writer: W, rows: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<MetricsReport>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::data(format!("results row {}: {e}", i + 1))))
        .collect()
}

pub fn save_results(path: &Path, rows: &[MetricsReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(std::io::BufWriter::new(file), rows)
}

pub fn load_results(path: &Path) -> Result<Vec<MetricsReport>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_results(std::io::BufReader::new(file))
}

/// The results CSV with the timing columns zeroed; equal for equal seeds.
pub fn deterministic_csv(rows: &[MetricsReport]) -> Result<String> {
    let stripped: Vec<MetricsReport> = rows
        .iter()
        .map(|r| MetricsReport {
            train_ms: 0.0,
            predict_ms: 0.0,
            ..r.clone()
        })
        .collect();
    let mut buf = Vec::new();
    write_results(&mut buf, &stripped)?;
    String::from_utf8(buf).map_err(|e| Error::data(e.to_string()))
}

/// Averages over the replications of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub gamma: f64,
    pub n: usize,
    pub theta: Option<f64>,
    pub repeats: Option<usize>,
    pub k: usize,
    pub replications: usize,
    pub mean_risk: f64,
    pub mean_regret: Option<f64>,
    pub mean_cis: Option<f64>,
    pub mean_train_ms: f64,
    pub mean_predict_ms: f64,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Groups rows by (method, gamma, N, theta, I).
pub fn summarize(rows: &[MetricsReport]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(String, u64, usize, u64, usize), Vec<&MetricsReport>> = BTreeMap::new();
    for r in rows {
        let key = r.sort_key();
        groups
            .entry((key.0, key.1, key.2, key.3, key.4))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let first = g[0];
            CellSummary {
                method: first.method.clone(),
                gamma: first.gamma,
                n: first.n,
                theta: first.theta,
                repeats: first.repeats,
                k: first.k,
                replications: g.len(),
                mean_risk: mean_of(g.iter().map(|r| r.risk)).unwrap_or(f64::NAN),
                mean_regret: mean_of(g.iter().filter_map(|r| r.regret)),
                mean_cis: mean_of(g.iter().filter_map(|r| r.cis)),
                mean_train_ms: mean_of(g.iter().map(|r| r.train_ms)).unwrap_or(f64::NAN),
                mean_predict_ms: mean_of(g.iter().map(|r| r.predict_ms)).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Rate observations (cell means) of one quantity for one method.
pub fn rate_observations(cells: &[CellSummary], method: &str, kind: ValueKind) -> Vec<RateObservation> {
    cells
        .iter()
        .filter(|c| c.method == method && c.theta.is_none())
        .filter_map(|c| {
            let value = match kind {
                ValueKind::Regret => c.mean_regret,
                ValueKind::Cis => c.mean_cis,
            }?;
            Some(RateObservation {
                gamma: c.gamma,
                n: c.n,
                value,
            })
        })
        .collect()
}

/// Fits regret and CIS rates over the cell means of `method`.
pub fn fit_results(rows: &[MetricsReport], method: &str) -> Result<Vec<RateFit>> {
    let cells = summarize(rows);
    let mut fits = Vec::new();
    for kind in [ValueKind::Regret, ValueKind::Cis] {
        let obs = rate_observations(&cells, method, kind);
        if !obs.is_empty() {
            fits.push(fit_rate(&obs, kind)?);
        }
    }
    if fits.is_empty() {
        return Err(Error::data(format!("no regret or CIS values for method {method:?}")));
    }
    Ok(fits)
}

#[derive(Debug, Serialize)]
struct FitRow {
    value_kind: String,
    slope: f64,
    stderr: f64,
    correlation: f64,
    intercepts: String,
}

/// Rate-fit summary CSV: `value_kind,slope,stderr,correlation,intercepts`,
/// intercepts written as `gamma:value` pairs joined by `;`.
pub fn write_fit_summary<W: Write>(writer: W, fits: &[RateFit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for f in fits {
        let intercepts = f
            .intercepts
            .iter()
            .map(|(g, b)| format!("{g}:{b}"))
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(FitRow {
            value_kind: f.kind.to_string(),
            slope: f.slope,
            stderr: f.stderr,
            correlation: f.correlation,
            intercepts,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data(e.to_string()))
}
