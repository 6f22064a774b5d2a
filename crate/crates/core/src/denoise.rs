//! Pre-training acceleration for bigNN.
//!
//! Every point of `I` prediction subsamples (each of size `m = N^theta`) is
//! relabeled with the bigNN prediction at its own coordinates. A query is
//! then answered by a 1-NN lookup in each subsample and a strict majority
//! over the `I` looked-up labels.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bignn::{majority_vote, BigNnModel};
use crate::dataset::{check_dim, Dataset, Label};
use crate::error::{Error, Result};
use crate::knn::{KnnIndex, SearchStrategy};
use crate::rng::RngStream;

/// Where the prediction subsamples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleSource {
    /// Independent draws of `m` points without replacement.
    #[default]
    Fresh,
    /// Unions of `max(1, round(m / n))` adjacent training subsamples.
    MergeTraining,
}

/// Prediction-subsample size `max(1, round(N^theta))`, capped at `N`.
pub fn prediction_subsample_size(n_total: usize, theta: f64) -> Result<usize> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::parameter(format!("theta must lie in (0, 1], got {theta}")));
    }
    let m = (n_total as f64).powf(theta).round() as usize;
    Ok(m.clamp(1, n_total.max(1)))
}

/// Relabeled 1-NN ensemble.
#[derive(Debug, Clone)]
pub struct DenoisedModel {
    pub(crate) subsamples: Vec<KnnIndex>,
    pub(crate) theta: f64,
    pub(crate) m: usize,
    pub(crate) source: SubsampleSource,
}

impl DenoisedModel {
    pub fn repeats(&self) -> usize {
        self.subsamples.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn source(&self) -> SubsampleSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.subsamples[0].dim()
    }

    pub fn subsamples(&self) -> &[KnnIndex] {
        &self.subsamples
    }

    /// Total nearest-neighbor lookups performed so far.
    pub fn query_count(&self) -> u64 {
        self.subsamples.iter().map(KnnIndex::query_count).sum()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        check_dim(self.dim(), x)?;
        let votes = self
            .subsamples
            .iter()
            .map(|s| s.nearest_label(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(majority_vote(&votes))
    }

    pub fn predict_batch(&self, queries: &Dataset) -> Result<Vec<Label>> {
        check_dim(self.dim(), queries.features(0))?;
        (0..queries.len())
            .into_par_iter()
            .map(|i| self.predict(queries.features(i)))
            .collect()
    }

    pub(crate) fn from_subsamples(
        subsamples: Vec<KnnIndex>,
        theta: f64,
        m: usize,
        source: SubsampleSource,
    ) -> Result<Self> {
        if subsamples.is_empty() {
            return Err(Error::data("denoised model has no subsamples"));
        }
        Ok(DenoisedModel {
            subsamples,
            theta,
            m,
            source,
        })
    }
}

/// Draws `repeats` prediction subsamples from `dataset` (the training data of
/// `model`) and relabels their points with `model`'s predictions.
pub fn pretrain(
    model: &BigNnModel,
    dataset: &Dataset,
    theta: f64,
    repeats: usize,
    rng: &mut RngStream,
) -> Result<DenoisedModel> {
    pretrain_with(model, dataset, theta, repeats, SubsampleSource::Fresh, rng)
}

pub fn pretrain_with(
    model: &BigNnModel,
    dataset: &Dataset,
    theta: f64,
    repeats: usize,
    source: SubsampleSource,
    rng: &mut RngStream,
) -> Result<DenoisedModel> {
    if repeats == 0 {
        return Err(Error::parameter("repeat count I must be at least 1"));
    }
    if dataset.dim() != model.dim() {
        return Err(Error::parameter("dataset dimension differs from the model's"));
    }
    let n_total = dataset.len();
    let m = prediction_subsample_size(n_total, theta)?;

    let draws: Vec<Vec<usize>> = match source {
        SubsampleSource::Fresh => (0..repeats)
            .map(|_| {
                let mut rows = index::sample(rng, n_total, m).into_vec();
                rows.sort_unstable();
                rows
            })
            .collect(),
        SubsampleSource::MergeTraining => {
            let plan = model.partition();
            if plan.total() != n_total {
                return Err(Error::config(
                    "merging training subsamples requires the model's own training data",
                ));
            }
            let s = plan.s();
            let per = ((m as f64 / plan.min_size() as f64).round() as usize).clamp(1, s);
            (0..repeats)
                .map(|i| {
                    let mut rows: Vec<usize> = (0..per)
                        .flat_map(|t| plan.members((i * per + t) % s).iter().copied())
                        .collect();
                    rows.sort_unstable();
                    rows.dedup();
                    rows
                })
                .collect()
        }
    };

    // Relabel each distinct sampled point once.
    let mut unique: Vec<usize> = draws.iter().flatten().copied().collect();
    unique.sort_unstable();
    unique.dedup();
    let relabeled: BTreeMap<usize, Label> = unique
        .par_iter()
        .map(|&i| model.predict(dataset.features(i)).map(|y| (i, y)))
        .collect::<Result<_>>()?;

    let subsamples = draws
        .par_iter()
        .map(|rows| {
            let labels = rows.iter().map(|i| relabeled[i]).collect();
            KnnIndex::from_rows_with_labels(dataset, rows, labels, SearchStrategy::KdTree)
        })
        .collect::<Result<Vec<_>>>()?;

    DenoisedModel::from_subsamples(subsamples, theta, m, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledPoint;
    use crate::kselect::KRule;
    use rand::Rng;

    fn noisy(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, "data", 0);
        let pts: Vec<LabeledPoint> = (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                let y: f64 = rng.random();
                LabeledPoint::new(vec![x, y], u8::from(rng.random::<f64>() < x)).unwrap()
            })
            .collect();
        Dataset::from_points(&pts).unwrap()
    }

    fn bignn(ds: &Dataset, gamma: f64) -> BigNnModel {
        BigNnModel::train(ds, gamma, KRule::Fixed { k: 3 }, &mut RngStream::new(1, "t", 0)).unwrap()
    }

    #[test]
    fn subsample_size() {
        // 8000^0.6 = 219.71
        assert_eq!(prediction_subsample_size(8000, 0.6).unwrap(), 220);
        assert_eq!(prediction_subsample_size(8000, 1.0).unwrap(), 8000);
        assert_eq!(prediction_subsample_size(3, 0.01).unwrap(), 1);
        assert!(prediction_subsample_size(100, 0.0).is_err());
        assert!(prediction_subsample_size(100, 1.5).is_err());
    }

    #[test]
    fn full_subsample_identity() {
        let ds = noisy(400, 1);
        let model = bignn(&ds, 0.3);
        let d = pretrain(&model, &ds, 1.0, 1, &mut RngStream::new(1, "pre", 0)).unwrap();
        assert_eq!(d.repeats(), 1);
        assert_eq!(d.subsamples()[0].len(), 400);
        for i in 0..ds.len() {
            let x = ds.features(i);
            assert_eq!(d.predict(x).unwrap(), model.predict(x).unwrap());
        }
    }

    #[test]
    fn stored_labels_are_model_predictions() {
        let ds = noisy(500, 2);
        let model = bignn(&ds, 0.4);
        let d = pretrain(&model, &ds, 0.7, 5, &mut RngStream::new(2, "pre", 0)).unwrap();
        for sub in d.subsamples() {
            assert_eq!(sub.len(), d.m());
            for (i, x, y) in sub.points() {
                assert_eq!(x, ds.features(i));
                assert_eq!(y, model.predict(x).unwrap());
            }
        }
    }

    #[test]
    fn constant_model_relabels_everything() {
        // All-ones training labels make every local vote 1.
        let mut ds = noisy(200, 3);
        ds = Dataset::new(2, ds.raw_features().to_vec(), vec![1; 200]).unwrap();
        let model = bignn(&ds, 0.2);
        let zeros = Dataset::new(2, ds.raw_features().to_vec(), vec![0; 200]).unwrap();
        let d = pretrain(&model, &zeros, 0.8, 3, &mut RngStream::new(3, "pre", 0)).unwrap();
        assert!(d
            .subsamples()
            .iter()
            .all(|s| s.points().iter().all(|p| p.2 == 1)));
    }

    #[test]
    fn prediction_cost_is_i_lookups() {
        let ds = noisy(600, 4);
        let model = bignn(&ds, 0.3);
        let d = pretrain(&model, &ds, 0.5, 7, &mut RngStream::new(4, "pre", 0)).unwrap();
        let queries = noisy(25, 5);
        d.predict_batch(&queries).unwrap();
        assert_eq!(d.query_count(), 7 * 25);
        assert!(d.subsamples().iter().all(|s| s.len() <= d.m()));
    }

    #[test]
    fn merged_training_subsamples() {
        let ds = noisy(400, 6);
        let model = bignn(&ds, 0.5); // s = 20, n = 20
        let d = pretrain_with(
            &model,
            &ds,
            0.6, // m = 36 -> 2 subsamples merged
            3,
            SubsampleSource::MergeTraining,
            &mut RngStream::new(6, "pre", 0),
        )
        .unwrap();
        assert_eq!(d.source(), SubsampleSource::MergeTraining);
        assert!(d.subsamples().iter().all(|s| s.len() == 40));
        let mut want: Vec<usize> = model.partition().members(0).to_vec();
        want.extend_from_slice(model.partition().members(1));
        want.sort_unstable();
        let got: Vec<usize> = d.subsamples()[0].points().iter().map(|p| p.0).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn even_repeat_ties_resolve_to_zero() {
        let one = KnnIndex::build(&[LabeledPoint::new(vec![0.0], 1).unwrap()]).unwrap();
        let zero = KnnIndex::build(&[LabeledPoint::new(vec![0.0], 0).unwrap()]).unwrap();
        let d = DenoisedModel::from_subsamples(vec![one.clone(), zero.clone()], 1.0, 1, SubsampleSource::Fresh)
            .unwrap();
        assert_eq!(d.predict(&[0.0]).unwrap(), 0);
        let d = DenoisedModel::from_subsamples(vec![one.clone(), one, zero], 1.0, 1, SubsampleSource::Fresh)
            .unwrap();
        assert_eq!(d.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        let ds = noisy(50, 7);
        let model = bignn(&ds, 0.0);
        let mut rng = RngStream::new(7, "pre", 0);
        assert!(matches!(pretrain(&model, &ds, 0.0, 1, &mut rng), Err(Error::Parameter(_))));
        assert!(matches!(pretrain(&model, &ds, 1.2, 1, &mut rng), Err(Error::Parameter(_))));
        assert!(matches!(pretrain(&model, &ds, 0.5, 0, &mut rng), Err(Error::Parameter(_))));
    }
}
