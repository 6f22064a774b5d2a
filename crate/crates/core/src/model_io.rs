//! Versioned JSON container for trained models.
//!
//! A file always holds the bigNN model and, optionally, a denoised model
//! pre-trained from it. Subsample point lists are stored in full so a model
//! can be reloaded without the original training file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bignn::BigNnModel;
use crate::dataset::{Dataset, Label};
use crate::denoise::{DenoisedModel, SubsampleSource};
use crate::error::{Error, Result};
use crate::kselect::KRule;
use crate::knn::{KnnIndex, SearchStrategy};
use crate::metrics::Classifier;
use crate::partition::PartitionPlan;
use crate::rng::StreamId;

pub const FORMAT: &str = "bignn-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SavedSubsample {
    indices: Vec<usize>,
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl SavedSubsample {
    fn from_index(index: &KnnIndex) -> Self {
        let points = index.points();
        SavedSubsample {
            indices: points.iter().map(|p| p.0).collect(),
            features: points.iter().map(|p| p.1.to_vec()).collect(),
            labels: points.iter().map(|p| p.2).collect(),
        }
    }

    fn into_index(self, dim: usize) -> Result<KnnIndex> {
        if self.features.len() != self.indices.len() || self.labels.len() != self.indices.len() {
            return Err(Error::Serialization("subsample field lengths disagree".into()));
        }
        let mut flat = Vec::with_capacity(dim * self.features.len());
        for f in &self.features {
            if f.len() != dim {
                return Err(Error::Serialization("stored point has wrong dimension".into()));
            }
            flat.extend_from_slice(f);
        }
        KnnIndex::from_parts(dim, flat, self.labels, self.indices, SearchStrategy::KdTree)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedBigNn {
    gamma: f64,
    k_local: usize,
    rule: KRule,
    partition_seed: StreamId,
    dim: usize,
    subsamples: Vec<SavedSubsample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedDenoised {
    theta: f64,
    m: usize,
    source: SubsampleSource,
    subsamples: Vec<SavedSubsample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    bignn: SavedBigNn,
    denoised: Option<SavedDenoised>,
}

/// A loaded model: bigNN, optionally with its denoised accelerator.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub bignn: BigNnModel,
    pub denoised: Option<DenoisedModel>,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.bignn.dim()
    }
}

impl Classifier for TrainedModel {
    /// Uses the denoised model when present.
    fn classify(&self, x: &[f64]) -> Result<Label> {
        match &self.denoised {
            Some(d) => d.predict(x),
            None => self.bignn.predict(x),
        }
    }
}

fn save_bignn(model: &BigNnModel) -> SavedBigNn {
    SavedBigNn {
        gamma: model.gamma(),
        k_local: model.k_local(),
        rule: model.rule(),
        partition_seed: model.partition_seed().clone(),
        dim: model.dim(),
        subsamples: model.local_indices().iter().map(SavedSubsample::from_index).collect(),
    }
}

fn load_bignn(saved: SavedBigNn) -> Result<BigNnModel> {
    let total: usize = saved.subsamples.iter().map(|s| s.indices.len()).sum();
    let mut features = vec![0.0; total * saved.dim];
    let mut labels = vec![0; total];
    let mut members = Vec::with_capacity(saved.subsamples.len());
    for sub in &saved.subsamples {
        for ((&i, f), &y) in sub.indices.iter().zip(&sub.features).zip(&sub.labels) {
            if i >= total || f.len() != saved.dim {
                return Err(Error::Serialization(format!("stored point {i} is malformed")));
            }
            features[i * saved.dim..(i + 1) * saved.dim].copy_from_slice(f);
            labels[i] = y;
        }
        members.push(sub.indices.clone());
    }
    let plan = PartitionPlan::from_members(saved.gamma, members)?;
    let data = Dataset::new(saved.dim, features, labels)?;
    BigNnModel::from_plan(
        &data,
        plan,
        saved.k_local,
        saved.rule,
        saved.partition_seed,
        SearchStrategy::KdTree,
    )
}

pub fn write_model<W: Write>(writer: W, bignn: &BigNnModel, denoised: Option<&DenoisedModel>) -> Result<()> {
    let file = ModelFile {
        format: FORMAT.to_string(),
        version: VERSION,
        bignn: save_bignn(bignn),
        denoised: denoised.map(|d| SavedDenoised {
            theta: d.theta(),
            m: d.m(),
            source: d.source(),
            subsamples: d.subsamples().iter().map(SavedSubsample::from_index).collect(),
        }),
    };
    serde_json::to_writer(writer, &file).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn read_model<R: Read>(reader: R) -> Result<TrainedModel> {
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| Error::Serialization(e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::Serialization(format!("not a model file (format {:?})", file.format)));
    }
    if file.version != VERSION {
        return Err(Error::Serialization(format!(
            "unsupported model version {} (expected {VERSION})",
            file.version
        )));
    }
    let dim = file.bignn.dim;
    let bignn = load_bignn(file.bignn)?;
    let denoised = match file.denoised {
        None => None,
        Some(d) => {
            let subsamples = d
                .subsamples
                .into_iter()
                .map(|s| s.into_index(dim))
                .collect::<Result<Vec<_>>>()?;
            Some(DenoisedModel::from_subsamples(subsamples, d.theta, d.m, d.source)?)
        }
    };
    Ok(TrainedModel { bignn, denoised })
}

pub fn save_model(path: &Path, bignn: &BigNnModel, denoised: Option<&DenoisedModel>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_model(&mut writer, bignn, denoised)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
