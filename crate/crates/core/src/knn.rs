//! Exact Euclidean k-nearest-neighbor search.
//!
//! Two interchangeable back ends share one result contract: a kd-tree
//! (median split on the widest-spread dimension, leaves of at most
//! [`LEAF_SIZE`] points) and a brute-force scan used as its oracle. Results
//! are ordered by `(squared distance, original index)`, so both back ends
//! return identical neighbor lists, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::dataset::{check_dim, Dataset, Label, LabeledPoint};
use crate::error::{Error, Result};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    #[default]
    KdTree,
    BruteForce,
}

/// One returned neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index of the point in the collection the index was built from.
    pub index: usize,
    pub distance: f64,
    pub label: Label,
}

/// The `min(k, size)` nearest points of a query, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    entries: Vec<Neighbor>,
    k: usize,
}

impl NeighborSet {
    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn requested_k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|n| n.index).collect()
    }

    /// Restricts to the first `k` entries.
    pub fn truncated(&self, k: usize) -> NeighborSet {
        NeighborSet {
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
            k,
        }
    }
}

/// Average label of a neighbor set, the local regression estimate.
pub fn mean_label(neighbors: &NeighborSet) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(Error::Logic("mean label of an empty neighbor set".into()));
    }
    let ones = neighbors.entries.iter().filter(|n| n.label == 1).count();
    Ok(ones as f64 / neighbors.len() as f64)
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
    label: Label,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Immutable exact kNN index over a fixed point set.
#[derive(Debug)]
pub struct KnnIndex {
    dim: usize,
    // Rows in storage order (kd-tree leaf order for the tree back end).
    features: Vec<f64>,
    labels: Vec<Label>,
    original: Vec<usize>,
    nodes: Vec<Node>,
    strategy: SearchStrategy,
    queries: AtomicU64,
}

impl Clone for KnnIndex {
    fn clone(&self) -> Self {
        KnnIndex {
            dim: self.dim,
            features: self.features.clone(),
            labels: self.labels.clone(),
            original: self.original.clone(),
            nodes: self.nodes.clone(),
            strategy: self.strategy,
            queries: AtomicU64::new(0),
        }
    }
}

impl KnnIndex {
    /// kd-tree over a list of points; original indices are list positions.
    pub fn build(points: &[LabeledPoint]) -> Result<Self> {
        Self::build_with(points, SearchStrategy::KdTree)
    }

    pub fn build_with(points: &[LabeledPoint], strategy: SearchStrategy) -> Result<Self> {
        let dataset = Dataset::from_points(points)?;
        Ok(Self::from_dataset(&dataset, strategy))
    }

    pub fn from_dataset(dataset: &Dataset, strategy: SearchStrategy) -> Self {
        let rows: Vec<usize> = (0..dataset.len()).collect();
        Self::from_parts(
            dataset.dim(),
            dataset.raw_features().to_vec(),
            dataset.labels().to_vec(),
            rows,
            strategy,
        )
        .expect("dataset invariants guarantee a valid index")
    }

    /// Index over selected rows of a dataset; original indices are the row numbers.
    pub fn from_rows(dataset: &Dataset, rows: &[usize], strategy: SearchStrategy) -> Result<Self> {
        let labels = rows.iter().map(|&i| dataset.label(i)).collect();
        Self::from_rows_with_labels(dataset, rows, labels, strategy)
    }

    /// Like [`KnnIndex::from_rows`] but with replacement labels, one per row.
    pub fn from_rows_with_labels(
        dataset: &Dataset,
        rows: &[usize],
        labels: Vec<Label>,
        strategy: SearchStrategy,
    ) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::Logic(format!(
                "{} replacement labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * dataset.dim());
        for &i in rows {
            if i >= dataset.len() {
                return Err(Error::parameter(format!("row {i} out of range")));
            }
            features.extend_from_slice(dataset.features(i));
        }
        Self::from_parts(dataset.dim(), features, labels, rows.to_vec(), strategy)
    }

    /// Builds from raw row-major parts.
    pub fn from_parts(
        dim: usize,
        features: Vec<f64>,
        labels: Vec<Label>,
        original: Vec<usize>,
        strategy: SearchStrategy,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::parameter("cannot index an empty point set"));
        }
        if dim == 0 || features.len() != dim * labels.len() || original.len() != labels.len() {
            return Err(Error::parameter("inconsistent point dimensions"));
        }
        let mut index = KnnIndex {
            dim,
            features,
            labels,
            original,
            nodes: Vec::new(),
            strategy,
            queries: AtomicU64::new(0),
        };
        if strategy == SearchStrategy::KdTree {
            index.build_tree();
        }
        Ok(index)
    }

    fn build_tree(&mut self) {
        let n = self.labels.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        build_node(&self.features, self.dim, &mut perm, 0, n, &mut nodes);
        self.nodes = nodes;

        let mut features = Vec::with_capacity(self.features.len());
        let mut labels = Vec::with_capacity(n);
        let mut original = Vec::with_capacity(n);
        for &p in &perm {
            features.extend_from_slice(&self.features[p * self.dim..(p + 1) * self.dim]);
            labels.push(self.labels[p]);
            original.push(self.original[p]);
        }
        self.features = features;
        self.labels = labels;
        self.original = original;
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strategy(&self) -> SearchStrategy {
        self.strategy
    }

    /// Number of queries answered since construction.
    pub fn query_count(&self) -> u64 {
        self.queries.load(AtomicOrdering::Relaxed)
    }

    /// Stored points as `(original index, features, label)`, ordered by original index.
    pub fn points(&self) -> Vec<(usize, &[f64], Label)> {
        let mut out: Vec<_> = (0..self.len())
            .map(|i| {
                (
                    self.original[i],
                    &self.features[i * self.dim..(i + 1) * self.dim],
                    self.labels[i],
                )
            })
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }

    /// The `min(k, len)` nearest stored points to `x`.
    pub fn query(&self, x: &[f64], k: usize) -> Result<NeighborSet> {
        check_dim(self.dim, x)?;
        if k == 0 {
            return Err(Error::parameter("k must be at least 1"));
        }
        self.queries.fetch_add(1, AtomicOrdering::Relaxed);
        let take = k.min(self.len());
        let mut found = match self.strategy {
            SearchStrategy::BruteForce => self.brute(x, take),
            SearchStrategy::KdTree => self.tree_search(x, take),
        };
        found.sort_unstable();
        let entries = found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
                label: c.label,
            })
            .collect();
        Ok(NeighborSet { entries, k })
    }

    /// Label of the single nearest point.
    pub fn nearest_label(&self, x: &[f64]) -> Result<Label> {
        Ok(self.query(x, 1)?.entries[0].label)
    }

    fn candidate(&self, x: &[f64], i: usize) -> Candidate {
        Candidate {
            dist2: squared_distance(x, &self.features[i * self.dim..(i + 1) * self.dim]),
            index: self.original[i],
            label: self.labels[i],
        }
    }

    fn brute(&self, x: &[f64], k: usize) -> Vec<Candidate> {
        let mut all: Vec<Candidate> = (0..self.len()).map(|i| self.candidate(x, i)).collect();
        if k < all.len() {
            all.select_nth_unstable(k - 1);
            all.truncate(k);
        }
        all
    }

    fn tree_search(&self, x: &[f64], k: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.visit(0, x, k, &mut heap);
        heap.into_vec()
    }

    fn visit(&self, node: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let c = self.candidate(x, i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = x[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, x, k, heap);
                // Equal bounds are still visited: a tie may carry a smaller index.
                let worst = heap.peek().map(|c| c.dist2);
                if heap.len() < k || worst.is_some_and(|w| diff * diff <= w) {
                    self.visit(far, x, k, heap);
                }
            }
        }
    }
}

fn build_node(
    features: &[f64],
    dim: usize,
    perm: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }

    let coord = |p: usize, d: usize| features[p * dim + d];
    let mut best_dim = 0;
    let mut best_spread = f64::NEG_INFINITY;
    for d in 0..dim {
        let (lo, hi) = perm[start..end]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(coord(p, d)), hi.max(coord(p, d)))
            });
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_dim = d;
        }
    }
    if best_spread <= 0.0 {
        // All points coincide; splitting cannot separate them.
        nodes.push(Node::Leaf { start, end });
        return id;
    }

    let mid = start + (end - start) / 2;
    perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        coord(a, best_dim).total_cmp(&coord(b, best_dim))
    });
    let value = coord(perm[mid], best_dim);

    nodes.push(Node::Leaf { start, end });
    let left = build_node(features, dim, perm, start, mid, nodes);
    let right = build_node(features, dim, perm, mid, end, nodes);
    nodes[id] = Node::Split {
        dim: best_dim,
        value,
        left,
        right,
    };
    id
}
