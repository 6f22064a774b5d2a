//! Cross-validated choice of k for the oracle kNN.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::{KnnIndex, SearchStrategy};
use crate::rng::RngStream;

/// Stratified fold labels: each class is shuffled separately and dealt
/// round-robin, continuing the dealing position across classes so fold
/// sizes differ by at most one.
pub fn stratified_folds(dataset: &Dataset, folds: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::parameter(format!("need at least 2 folds, got {folds}")));
    }
    if folds > dataset.len() {
        return Err(Error::parameter(format!(
            "{folds} folds requested for {} points",
            dataset.len()
        )));
    }
    let mut assignment = vec![0; dataset.len()];
    let mut slot = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.label(i) == class)
            .collect();
        members.shuffle(rng);
        for i in members {
            assignment[i] = slot % folds;
            slot += 1;
        }
    }
    Ok(assignment)
}

/// Mean validation misclassification rate of every k in `k_grid`
/// (deduplicated, ascending) for the given fold assignment.
pub fn cv_error_curve(
    dataset: &Dataset,
    fold_of: &[usize],
    folds: usize,
    k_grid: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let k_max = *grid
        .last()
        .ok_or_else(|| Error::parameter("k grid is empty"))?;
    if grid[0] == 0 {
        return Err(Error::parameter("k grid contains 0"));
    }
    let fold_sizes: Vec<usize> = (0..folds)
        .map(|f| fold_of.iter().filter(|&&g| g == f).count())
        .collect();
    let smallest_train = dataset.len() - fold_sizes.iter().max().copied().unwrap_or(0);
    if k_max > smallest_train {
        return Err(Error::parameter(format!(
            "largest k {k_max} exceeds the smallest training fold ({smallest_train} points)"
        )));
    }

    let per_fold: Vec<Vec<usize>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] != f).collect();
            let index = KnnIndex::from_rows(dataset, &train, SearchStrategy::KdTree)?;
            let mut errors = vec![0usize; grid.len()];
            for i in (0..dataset.len()).filter(|&i| fold_of[i] == f) {
                let neighbors = index.query(dataset.features(i), k_max)?;
                let mut ones = 0usize;
                let mut g = 0;
                for (rank, n) in neighbors.entries().iter().enumerate() {
                    ones += usize::from(n.label);
                    let k = rank + 1;
                    if k == grid[g] {
                        let predicted = u8::from(2 * ones > k);
                        errors[g] += usize::from(predicted != dataset.label(i));
                        g += 1;
                        if g == grid.len() {
                            break;
                        }
                    }
                }
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;

    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &k)| {
            let mean = (0..folds)
                .map(|f| per_fold[f][g] as f64 / fold_sizes[f] as f64)
                .sum::<f64>()
                / folds as f64;
            (k, mean)
        })
        .collect())
}

/// The k in `k_grid` with the smallest mean validation error over
/// stratified folds; ties go to the smallest k.
pub fn tune_k_cv(dataset: &Dataset, folds: usize, k_grid: &[usize], rng: &mut RngStream) -> Result<usize> {
    let fold_of = stratified_folds(dataset, folds, rng)?;
    let curve = cv_error_curve(dataset, &fold_of, folds, k_grid)?;
    let mut best = curve[0];
    for &(k, err) in &curve[1..] {
        if err < best.1 {
            best = (k, err);
        }
    }
    Ok(best.0)
}
