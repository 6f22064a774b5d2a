//! The divide-and-conquer kNN ensemble.
//!
//! Training partitions the data into `s` subsamples and builds one kNN index
//! per subsample. A query is classified by every local index (label 1 iff the
//! local mean label is strictly above 1/2) and the ensemble answers 1 iff
//! strictly more than half of the local votes are 1. Both ties resolve to 0.

use rayon::prelude::*;

use crate::dataset::{check_dim, Dataset, Label};
use crate::error::{Error, Result};
use crate::kselect::KRule;
use crate::knn::{mean_label, KnnIndex, SearchStrategy};
use crate::partition::{make_partition, PartitionPlan};
use crate::rng::{RngStream, StreamId};

/// Trained bigNN classifier.
#[derive(Debug, Clone)]
pub struct BigNnModel {
    pub(crate) local: Vec<KnnIndex>,
    pub(crate) k_local: usize,
    pub(crate) rule: KRule,
    pub(crate) plan: PartitionPlan,
    pub(crate) partition_seed: StreamId,
    pub(crate) dim: usize,
}

impl BigNnModel {
    /// Partitions `dataset` with split coefficient `gamma`, resolves the
    /// local k from `rule` and builds the `s` local indices.
    pub fn train(dataset: &Dataset, gamma: f64, rule: KRule, rng: &mut RngStream) -> Result<Self> {
        Self::train_with(dataset, gamma, rule, rng, SearchStrategy::KdTree)
    }

    pub fn train_with(
        dataset: &Dataset,
        gamma: f64,
        rule: KRule,
        rng: &mut RngStream,
        strategy: SearchStrategy,
    ) -> Result<Self> {
        let partition_seed = rng.id().clone();
        let plan = make_partition(dataset.len(), gamma, rng)?;
        let k_local = rule.resolve(dataset.len(), plan.s(), plan.min_size())?;
        Self::from_plan(dataset, plan, k_local, rule, partition_seed, strategy)
    }

    /// Builds local indices for an existing partition.
    pub fn from_plan(
        dataset: &Dataset,
        plan: PartitionPlan,
        k_local: usize,
        rule: KRule,
        partition_seed: StreamId,
        strategy: SearchStrategy,
    ) -> Result<Self> {
        if plan.total() != dataset.len() {
            return Err(Error::config(format!(
                "partition covers {} points but the dataset has {}",
                plan.total(),
                dataset.len()
            )));
        }
        check_k_fits(&plan, k_local)?;
        let local = plan
            .subsamples()
            .par_iter()
            .map(|rows| KnnIndex::from_rows(dataset, rows, strategy))
            .collect::<Result<Vec<_>>>()?;
        Ok(BigNnModel {
            local,
            k_local,
            rule,
            plan,
            partition_seed,
            dim: dataset.dim(),
        })
    }

    pub fn s(&self) -> usize {
        self.local.len()
    }

    pub fn k_local(&self) -> usize {
        self.k_local
    }

    pub fn gamma(&self) -> f64 {
        self.plan.gamma()
    }

    pub fn k_o(&self) -> f64 {
        self.rule.k_o()
    }

    pub fn rule(&self) -> KRule {
        self.rule
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partition(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn partition_seed(&self) -> &StreamId {
        &self.partition_seed
    }

    pub fn local_indices(&self) -> &[KnnIndex] {
        &self.local
    }

    /// One vote per subsample, in subsample order.
    pub fn local_votes(&self, x: &[f64]) -> Result<Vec<Label>> {
        check_dim(self.dim, x)?;
        self.local
            .iter()
            .map(|index| predict_local(index, self.k_local, x))
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(majority_vote(&self.local_votes(x)?))
    }

    /// Predicts every row of `queries`, in parallel over rows.
    pub fn predict_batch(&self, queries: &Dataset) -> Result<Vec<Label>> {
        check_dim(self.dim, queries.features(0))?;
        (0..queries.len())
            .into_par_iter()
            .map(|i| self.predict(queries.features(i)))
            .collect()
    }
}

pub(crate) fn check_k_fits(plan: &PartitionPlan, k_local: usize) -> Result<()> {
    if k_local == 0 {
        return Err(Error::config("local k must be at least 1"));
    }
    if let Some((j, rows)) = plan
        .subsamples()
        .iter()
        .enumerate()
        .find(|(_, rows)| rows.len() < k_local)
    {
        return Err(Error::config(format!(
            "local k = {k_local} exceeds the size {} of subsample {j}",
            rows.len()
        )));
    }
    Ok(())
}

/// Local kNN decision: 1 iff the mean neighbor label is strictly above 1/2.
pub fn predict_local(index: &KnnIndex, k: usize, x: &[f64]) -> Result<Label> {
    let neighbors = index.query(x, k)?;
    Ok(u8::from(mean_label(&neighbors)? > 0.5))
}

/// 1 iff strictly more than half of the votes are 1.
pub fn majority_vote(votes: &[Label]) -> Label {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    u8::from(2 * ones > votes.len())
}
