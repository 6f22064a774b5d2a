//! Random division of a dataset into `s = N^gamma` subsamples.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Number of subsamples for `N` points at split coefficient `gamma`:
/// `round(N^gamma)` (half away from zero), clamped to `[1, N]`.
pub fn subsample_count(n_total: usize, gamma: f64) -> Result<usize> {
    check_gamma(gamma)?;
    if n_total == 0 {
        return Err(Error::parameter("cannot partition an empty dataset"));
    }
    let s = (n_total as f64).powf(gamma).round() as usize;
    Ok(s.clamp(1, n_total))
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::parameter(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Assignment of every point to one of `s` subsamples.
///
/// Subsample sizes differ by at most one; the first `N mod s` subsamples hold
/// the extra point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    gamma: f64,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of subsamples `s`.
    pub fn s(&self) -> usize {
        self.members.len()
    }

    pub fn total(&self) -> usize {
        self.assignment.len()
    }

    /// Smallest subsample size, `floor(N / s)`.
    pub fn min_size(&self) -> usize {
        self.members.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn max_size(&self) -> usize {
        self.members.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Subsample index of point `i`.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Point indices in subsample `j`, ascending.
    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn subsamples(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Rebuilds a plan from explicit subsample member lists (used when
    /// loading saved models). The lists must cover `0..N` exactly once.
    pub fn from_members(gamma: f64, members: Vec<Vec<usize>>) -> Result<Self> {
        let total: usize = members.iter().map(Vec::len).sum();
        if members.is_empty() || total == 0 {
            return Err(Error::data("partition has no points"));
        }
        let mut assignment = vec![usize::MAX; total];
        for (j, list) in members.iter().enumerate() {
            for &i in list {
                if i >= total || assignment[i] != usize::MAX {
                    return Err(Error::data(format!(
                        "partition member {i} is out of range or repeated"
                    )));
                }
                assignment[i] = j;
            }
        }
        Ok(PartitionPlan {
            gamma,
            assignment,
            members,
        })
    }
}

/// Shuffles `0..n_total` with Fisher-Yates and deals the permutation
/// round-robin into `round(N^gamma)` subsamples.
pub fn make_partition(n_total: usize, gamma: f64, rng: &mut RngStream) -> Result<PartitionPlan> {
    let s = subsample_count(n_total, gamma)?;
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(rng);

    let mut members = vec![Vec::with_capacity(n_total / s + 1); s];
    let mut assignment = vec![0; n_total];
    for (slot, &point) in order.iter().enumerate() {
        let j = slot % s;
        members[j].push(point);
        assignment[point] = j;
    }
    for list in &mut members {
        list.sort_unstable();
    }
    Ok(PartitionPlan {
        gamma,
        assignment,
        members,
    })
}
