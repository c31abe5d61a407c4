//! Exact Euclidean nearest-neighbour search over a ball tree.
//!
//! Results are ordered by `(distance, row index)`, so equidistant points
//! resolve to the lower row index and the answer matches an exhaustive scan
//! exactly, ties included.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::matrix::{euclidean, Matrix};

pub const DEFAULT_LEAF_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeighborError {
    #[error("cannot index an empty point set")]
    Empty,
    #[error("non-finite coordinate at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("k = {k} is outside [1, {m}]")]
    KTooLarge { k: usize, m: usize },
    #[error("query has {got} dimensions, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    radius: f64,
    children: Option<(usize, usize)>,
}

/// Immutable ball-tree over a copy of the indexed points.
#[derive(Debug)]
pub struct NeighborIndex {
    points: Matrix,
    order: Vec<usize>,
    nodes: Vec<Node>,
    centroids: Vec<f64>,
    leaf_size: usize,
    distance_evals: AtomicU64,
}

impl Clone for NeighborIndex {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            order: self.order.clone(),
            nodes: self.nodes.clone(),
            centroids: self.centroids.clone(),
            leaf_size: self.leaf_size,
            distance_evals: AtomicU64::new(self.distance_evals.load(AtomicOrdering::Relaxed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl NeighborIndex {
    pub fn build(points: Matrix, leaf_size: usize) -> Result<Self, NeighborError> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(NeighborError::Empty);
        }
        for (row, r) in points.iter_rows().enumerate() {
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(NeighborError::NonFiniteInput { row, col });
            }
        }
        let leaf_size = leaf_size.max(1);
        let mut index = Self {
            order: (0..points.rows()).collect(),
            nodes: Vec::new(),
            centroids: Vec::new(),
            leaf_size,
            points,
            distance_evals: AtomicU64::new(0),
        };
        index.build_node(0, index.points.rows());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.points.cols();
        let id = self.nodes.len();
        let mut centroid = alloc::vec![0.0; d];
        for &i in &self.order[start..end] {
            for (c, v) in centroid.iter_mut().zip(self.points.row(i)) {
                *c += v;
            }
        }
        let n = (end - start) as f64;
        centroid.iter_mut().for_each(|c| *c /= n);
        let radius = self.order[start..end]
            .iter()
            .map(|&i| euclidean(&centroid, self.points.row(i)))
            .fold(0.0, f64::max);
        self.centroids.extend_from_slice(&centroid);
        self.nodes.push(Node {
            start,
            end,
            radius,
            children: None,
        });

        if end - start > self.leaf_size {
            // split on the widest coordinate at its median
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..d {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &i in &self.order[start..end] {
                    let v = self.points.get(i, j);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if hi - lo > best.1 {
                    best = (j, hi - lo);
                }
            }
            let dim = best.0;
            let mid = (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
                points
                    .get(a, dim)
                    .total_cmp(&points.get(b, dim))
                    .then(a.cmp(&b))
            });
            let left = self.build_node(start, start + mid);
            let right = self.build_node(start + mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    /// Total distance evaluations (point and node-centroid) since the last reset.
    pub fn distance_evaluations(&self) -> u64 {
        self.distance_evals.load(AtomicOrdering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.distance_evals.store(0, AtomicOrdering::Relaxed);
    }

    fn centroid(&self, node: usize) -> &[f64] {
        let d = self.points.cols();
        &self.centroids[node * d..(node + 1) * d]
    }

    /// The `k` nearest rows as `(row, distance)`, ascending.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>, NeighborError> {
        self.knn_counted(query, k).map(|(r, _)| r)
    }

    /// Like [`knn`](Self::knn) but also returns this query's distance-evaluation count.
    pub fn knn_counted(
        &self,
        query: &[f64],
        k: usize,
    ) -> Result<(Vec<(usize, f64)>, u64), NeighborError> {
        if query.len() != self.dim() {
            return Err(NeighborError::DimensionMismatch {
                expected: self.dim(),
                got: query.len(),
            });
        }
        if k == 0 || k > self.len() {
            return Err(NeighborError::KTooLarge { k, m: self.len() });
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let mut evals = 0u64;
        let root_dist = euclidean(query, self.centroid(0));
        evals += 1;
        self.search(0, root_dist, query, k, &mut heap, &mut evals);
        self.distance_evals
            .fetch_add(evals, AtomicOrdering::Relaxed);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok((out.into_iter().map(|c| (c.index, c.dist)).collect(), evals))
    }

    fn search(
        &self,
        node: usize,
        centroid_dist: f64,
        query: &[f64],
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
        evals: &mut u64,
    ) {
        let n = &self.nodes[node];
        let lower = (centroid_dist - n.radius).max(0.0);
        if heap.len() == k {
            let worst = heap.peek().map_or(f64::INFINITY, |c| c.dist);
            // slack keeps exact ties reachable despite rounding in the bound
            if lower > worst + 1e-9 * (1.0 + worst) {
                return;
            }
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let c = Candidate {
                        dist: euclidean(query, self.points.row(i)),
                        index: i,
                    };
                    *evals += 1;
                    if heap.len() < k {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|w| c < *w) {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Some((l, r)) => {
                let dl = euclidean(query, self.centroid(l));
                let dr = euclidean(query, self.centroid(r));
                *evals += 2;
                if dl <= dr {
                    self.search(l, dl, query, k, heap, evals);
                    self.search(r, dr, query, k, heap, evals);
                } else {
                    self.search(r, dr, query, k, heap, evals);
                    self.search(l, dl, query, k, heap, evals);
                }
            }
        }
    }

    /// Nearest row; ties go to the lower index.
    pub fn nns(&self, query: &[f64]) -> Result<usize, NeighborError> {
        Ok(self.knn(query, 1)?[0].0)
    }

    /// Checks the structural invariants: every row in exactly one leaf and
    /// every node's radius covering its rows.
    pub fn check_invariants(&self) -> bool {
        let mut seen = alloc::vec![0u32; self.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            let c = self.centroid(id);
            for &i in &self.order[n.start..n.end] {
                if euclidean(c, self.points.row(i)) > n.radius * (1.0 + 1e-12) + 1e-12 {
                    return false;
                }
                if n.children.is_none() {
                    seen[i] += 1;
                }
            }
        }
        seen.iter().all(|&s| s == 1)
    }
}
