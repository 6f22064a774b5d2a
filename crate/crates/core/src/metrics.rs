//! Risk, instability, timing and rate-fitting measurements.

use std::collections::BTreeSet;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bignn::{predict_local, BigNnModel};
use crate::dataset::{Dataset, Label};
use crate::denoise::DenoisedModel;
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::rng::RngStream;
use crate::synthgen::GaussianClassModel;

/// Anything that maps a feature vector to a binary label.
pub trait Classifier {
    fn classify(&self, x: &[f64]) -> Result<Label>;
}

impl Classifier for BigNnModel {
    fn classify(&self, x: &[f64]) -> Result<Label> {
        self.predict(x)
    }
}

impl Classifier for DenoisedModel {
    fn classify(&self, x: &[f64]) -> Result<Label> {
        self.predict(x)
    }
}

impl Classifier for GaussianClassModel {
    fn classify(&self, x: &[f64]) -> Result<Label> {
        self.bayes_classify(x)
    }
}

/// Plain kNN over a single index.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    pub index: KnnIndex,
    pub k: usize,
}

impl Classifier for KnnClassifier {
    fn classify(&self, x: &[f64]) -> Result<Label> {
        predict_local(&self.index, self.k, x)
    }
}

/// Adapts a closure into a [`Classifier`].
pub struct FnClassifier<F>(pub F);

impl<F: Fn(&[f64]) -> Label> Classifier for FnClassifier<F> {
    fn classify(&self, x: &[f64]) -> Result<Label> {
        Ok((self.0)(x))
    }
}

/// Misclassification fraction.
pub fn empirical_risk(predictions: &[Label], truth: &[Label]) -> Result<f64> {
    disagreement(predictions, truth)
}

/// Fraction of positions where two label vectors differ.
pub fn disagreement(a: &[Label], b: &[Label]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::parameter(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::parameter("cannot score empty label vectors"));
    }
    let differ = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(differ as f64 / a.len() as f64)
}

pub fn classify_all<C: Classifier + Sync + ?Sized>(classifier: &C, points: &Dataset) -> Result<Vec<Label>> {
    (0..points.len())
        .into_par_iter()
        .map(|i| classifier.classify(points.features(i)))
        .collect()
}

/// Classification instability: mean disagreement on `test_points` between
/// classifiers trained on independent size-`n` draws from `model`, over
/// `pairs` pairs.
pub fn empirical_cis<C, T>(
    trainer: T,
    model: &GaussianClassModel,
    n: usize,
    test_points: &Dataset,
    pairs: usize,
    rng: &RngStream,
) -> Result<f64>
where
    C: Classifier + Sync,
    T: Fn(&Dataset, &mut RngStream) -> Result<C> + Sync,
{
    if pairs == 0 {
        return Err(Error::parameter("need at least one training pair"));
    }
    let per_pair = (0..pairs)
        .into_par_iter()
        .map(|p| {
            let mut labels = Vec::with_capacity(2);
            for side in 0..2u64 {
                let stream = rng.substream("cis-pair", p as u64).substream("side", side);
                let train = model.sample(n, &mut stream.substream("data", 0))?;
                let classifier = trainer(&train, &mut stream.substream("train", 0))?;
                labels.push(classify_all(&classifier, test_points)?);
            }
            disagreement(&labels[0], &labels[1])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_pair.iter().sum::<f64>() / pairs as f64)
}

/// Which measured quantity a rate fit describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Regret,
    Cis,
}

impl std::fmt::Display for ValueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ValueKind::Regret => "regret",
            ValueKind::Cis => "cis",
        })
    }
}

/// One observation for [`fit_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateObservation {
    pub gamma: f64,
    pub n: usize,
    pub value: f64,
}

/// Result of `log(value) ~ factor(gamma) + log(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub kind: ValueKind,
    /// Shared coefficient of `log N`.
    pub slope: f64,
    pub stderr: f64,
    /// `(gamma, intercept)`, ascending in gamma.
    pub intercepts: Vec<(f64, f64)>,
    /// Pearson correlation between fitted and observed log values.
    pub correlation: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares with one intercept per gamma level and a shared
/// slope on `log N`, solved through the normal equations.
pub fn fit_rate(rows: &[RateObservation], kind: ValueKind) -> Result<RateFit> {
    if let Some((i, r)) = rows
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.value > 0.0) || !r.value.is_finite())
    {
        return Err(Error::data(format!(
            "row {i} (gamma={}, N={}) has non-positive {kind} value {}",
            r.gamma, r.n, r.value
        )));
    }
    let mut gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let distinct_n: BTreeSet<usize> = rows.iter().map(|r| r.n).collect();
    if distinct_n.len() < 2 {
        return Err(Error::data("rate fit needs at least two distinct N values"));
    }
    for &g in &gammas {
        let ns: BTreeSet<usize> = rows.iter().filter(|r| r.gamma == g).map(|r| r.n).collect();
        if ns.len() < 2 {
            return Err(Error::data(format!(
                "gamma={g} appears with fewer than two distinct N values"
            )));
        }
    }

    let p = gammas.len() + 1;
    let n_obs = rows.len();
    let mut x = DMatrix::<f64>::zeros(n_obs, p);
    let mut y = DVector::<f64>::zeros(n_obs);
    for (i, r) in rows.iter().enumerate() {
        let level = gammas.iter().position(|&g| g == r.gamma).expect("level exists");
        x[(i, level)] = 1.0;
        x[(i, p - 1)] = (r.n as f64).ln();
        y[i] = r.value.ln();
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::data("rate-fit design matrix is rank deficient"))?;
    let beta = chol.solve(&xty);
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (0..n_obs).map(|i| y[i] - fitted[i]).collect();

    let dof = n_obs as f64 - p as f64;
    let stderr = if dof > 0.0 {
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        let inv = chol.inverse();
        (rss / dof * inv[(p - 1, p - 1)]).sqrt()
    } else {
        f64::NAN
    };

    Ok(RateFit {
        kind,
        slope: beta[p - 1],
        stderr,
        intercepts: gammas.iter().enumerate().map(|(j, &g)| (g, beta[j])).collect(),
        correlation: pearson(fitted.as_slice(), y.as_slice()),
        residuals,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Oracle time divided by bigNN time.
pub fn speedup(oracle_time: Duration, bignn_time: Duration) -> Result<f64> {
    if bignn_time.is_zero() {
        return Err(Error::parameter("bigNN time must be positive"));
    }
    Ok(oracle_time.as_secs_f64() / bignn_time.as_secs_f64())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One-sided p-value `P(rho <= observed)` under independence.
///
/// Exact permutation distribution for `n <= 8`; Student-t approximation above.
pub fn spearman_p_lower(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let rho = spearman(x, y);
    if n < 3 || rho.is_nan() {
        return 1.0;
    }
    if n <= 8 {
        let rx = average_ranks(x);
        let ry = average_ranks(y);
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut hits, mut total) = (0u64, 0u64);
        loop {
            let permuted: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
            if pearson(&rx, &permuted) <= rho + 1e-12 {
                hits += 1;
            }
            total += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        return hits as f64 / total as f64;
    }
    let dof = (n - 2) as f64;
    let t = rho * (dof / (1.0 - rho * rho).max(1e-300)).sqrt();
    StudentsT::new(0.0, 1.0, dof).map(|d| d.cdf(t)).unwrap_or(1.0)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Least-squares slope of `y` on `x`.
pub fn simple_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
