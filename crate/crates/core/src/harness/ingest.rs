//! Delimited-text loader for real datasets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};

/// Layout of a real dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataset {
    #[serde(default)]
    pub name: String,
    pub path: PathBuf,
    /// Zero-based label column; negative values count from the end (-1 = last).
    #[serde(default = "last_column")]
    pub label_column: i64,
    /// Zero-based feature columns; all non-label columns when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<usize>>,
    /// Whether the first row is a header; detected from its cells when absent.
    #[serde(default)]
    pub header: Option<bool>,
    #[serde(default = "comma")]
    pub delimiter: char,
    /// Raw label text to class. Without a map, labels must read as 0 or 1.
    #[serde(default)]
    pub label_map: Option<BTreeMap<String, Label>>,
    #[serde(default)]
    pub expected_rows: Option<usize>,
    #[serde(default)]
    pub expected_dim: Option<usize>,
}

fn last_column() -> i64 {
    -1
}

fn comma() -> char {
    ','
}

impl RealDataset {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RealDataset {
            name: String::new(),
            path: path.into(),
            label_column: -1,
            feature_columns: None,
            header: None,
            delimiter: ',',
            label_map: None,
            expected_rows: None,
            expected_dim: None,
        }
    }
}

fn map_label(raw: &str, schema: &RealDataset, line: usize) -> Result<Label> {
    let raw = raw.trim();
    if let Some(map) = &schema.label_map {
        return match map.get(raw) {
            Some(&y) if y <= 1 => Ok(y),
            Some(&y) => Err(Error::data(format!("line {line}: label {raw:?} maps to non-binary {y}"))),
            None => Err(Error::data(format!("line {line}: label {raw:?} is not in the label map"))),
        };
    }
    match raw.parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(0),
        Ok(v) if v == 1.0 => Ok(1),
        _ => Err(Error::data(format!("line {line}: label {raw:?} is not binary"))),
    }
}

/// Reads a delimited numeric file into a [`Dataset`].
pub fn load_csv(schema: &RealDataset) -> Result<Dataset> {
    let text = std::fs::read_to_string(&schema.path).map_err(|e| Error::io(&schema.path, e))?;
    parse_csv(&text, schema)
}

pub fn parse_csv(text: &str, schema: &RealDataset) -> Result<Dataset> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::config("delimiter must be an ASCII character"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((i + 1, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::data(format!("{} has no rows", schema.path.display())));
    };
    let width = first.len();
    let label_col = if schema.label_column < 0 {
        width as i64 + schema.label_column
    } else {
        schema.label_column
    };
    if label_col < 0 || label_col as usize >= width {
        return Err(Error::config(format!(
            "label column {} is outside a {width}-column file",
            schema.label_column
        )));
    }
    let label_col = label_col as usize;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => (0..width).filter(|&c| c != label_col).collect(),
    };
    if feature_cols.is_empty() || feature_cols.iter().any(|&c| c >= width) {
        return Err(Error::config("feature columns are empty or out of range"));
    }

    let skip_header = schema.header.unwrap_or_else(|| {
        feature_cols
            .iter()
            .any(|&c| first.get(c).is_some_and(|v| v.parse::<f64>().is_err()))
    });

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in records.iter().skip(usize::from(skip_header)) {
        if rec.len() != width {
            return Err(Error::data(format!(
                "line {line}: {} fields, expected {width}",
                rec.len()
            )));
        }
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!("line {line}, column {}: {cell:?} is not numeric", c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!("line {line}, column {}: non-finite value", c + 1)));
            }
            features.push(v);
        }
        labels.push(map_label(&rec[label_col], schema, *line)?);
    }
    if labels.is_empty() {
        return Err(Error::data(format!("{} has no data rows", schema.path.display())));
    }
    let data = Dataset::new(feature_cols.len(), features, labels)?;
    if let Some(rows) = schema.expected_rows {
        if rows != data.len() {
            return Err(Error::data(format!("expected {rows} rows, parsed {}", data.len())));
        }
    }
    if let Some(dim) = schema.expected_dim {
        if dim != data.dim() {
            return Err(Error::data(format!("expected dimension {dim}, parsed {}", data.dim())));
        }
    }
    Ok(data)
}
