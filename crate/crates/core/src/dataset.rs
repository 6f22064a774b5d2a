//! Labeled point containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label, always 0 or 1.
pub type Label = u8;

/// A single observation `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: Label) -> Result<Self> {
        check_features(&features)?;
        check_label(label)?;
        Ok(LabeledPoint { features, label })
    }
}

pub(crate) fn check_label(label: Label) -> Result<()> {
    if label > 1 {
        return Err(Error::data(format!("label {label} is not binary")));
    }
    Ok(())
}

pub(crate) fn check_features(features: &[f64]) -> Result<()> {
    if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!(
            "non-finite coordinate {} at position {pos}",
            features[pos]
        )));
    }
    Ok(())
}

/// Training/test container: `N` points of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::parameter("dataset dimension must be positive"));
        }
        if labels.is_empty() {
            return Err(Error::parameter("dataset must contain at least one point"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::data(format!(
                "feature buffer has {} values, expected {} x {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        check_features(&features)?;
        for &label in &labels {
            check_label(label)?;
        }
        Ok(Dataset {
            dim,
            features,
            labels,
        })
    }

    pub fn from_points(points: &[LabeledPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::parameter("dataset must contain at least one point"))?;
        let dim = first.features.len();
        let mut features = Vec::with_capacity(dim * points.len());
        let mut labels = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::parameter(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.features.len()
                )));
            }
            features.extend_from_slice(&p.features);
            labels.push(p.label);
        }
        Dataset::new(dim, features, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn raw_features(&self) -> &[f64] {
        &self.features
    }

    pub fn point(&self, i: usize) -> LabeledPoint {
        LabeledPoint {
            features: self.features(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::parameter(format!(
                    "row {i} out of range for dataset of size {}",
                    self.len()
                )));
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(self.dim, features, labels)
    }
}

pub(crate) fn check_dim(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::parameter(format!(
            "query has dimension {}, expected {dim}",
            x.len()
        )));
    }
    Ok(())
}
