//! Lloyd k-means with k-means++ seeding, plus a size-capped variant whose
//! assignment step is a regret-ordered greedy transport.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::matrix::{euclidean, sq_euclidean, Matrix};
use crate::neighbors::NeighborIndex;
use crate::rng;

/// Above this many centers the assignment step queries a ball tree over the centers.
const TREE_ASSIGN_MIN_K: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty point set")]
    Empty,
    #[error("k = {k} is outside [1, {n}]")]
    KTooLarge { k: usize, n: usize },
    #[error("{k} clusters of at most {max_size} rows cannot hold {n} rows")]
    Infeasible { k: usize, max_size: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each iteration's center update.
    pub inertia_trace: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    /// Rows of cluster `k` in ascending order.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == k).then_some(i))
            .collect()
    }
}

pub fn inertia(points: &Matrix, centers: &Matrix, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_euclidean(points.row(i), centers.row(a)))
        .sum()
}

fn check_k(points: &Matrix, k: usize) -> Result<(), ClusterError> {
    if points.rows() == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || k > points.rows() {
        return Err(ClusterError::KTooLarge {
            k,
            n: points.rows(),
        });
    }
    Ok(())
}

fn kmeans_plus_plus(points: &Matrix, k: usize, rng: &mut rng::SeededRng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| sq_euclidean(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in min_d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.unwrap()
        } else {
            // fewer distinct points than centers
            (0..n).find(|&i| !taken[i]).unwrap()
        };
        taken[next] = true;
        chosen.push(next);
        for (i, d) in min_d2.iter_mut().enumerate() {
            *d = d.min(sq_euclidean(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Nearest center per row, ties to the lower center index.
fn assign_nearest(points: &Matrix, centers: &Matrix, out: &mut [usize]) {
    if centers.rows() > TREE_ASSIGN_MIN_K {
        let tree = NeighborIndex::build(centers.clone(), 8).expect("centers are finite");
        for (i, a) in out.iter_mut().enumerate() {
            *a = tree.nns(points.row(i)).expect("dimension checked");
        }
    } else {
        for (i, a) in out.iter_mut().enumerate() {
            let row = points.row(i);
            let mut best = (f64::INFINITY, 0);
            for c in 0..centers.rows() {
                let d = euclidean(row, centers.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            *a = best.1;
        }
    }
}

/// Moves the farthest-from-center row of a multi-member cluster into each empty cluster.
fn repair_empty(points: &Matrix, centers: &mut Matrix, assignments: &mut [usize]) {
    let k = centers.rows();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_euclidean(points.row(i), centers.row(a));
            if d > far.0 {
                far = (d, i);
            }
        }
        let i = far.1;
        assignments[i] = empty;
        centers.row_mut(empty).copy_from_slice(points.row(i));
    }
}

/// Member means, summed in ascending row order.
fn update_centers(points: &Matrix, assignments: &[usize], centers: &mut Matrix) {
    let k = centers.rows();
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / n;
            }
        }
    }
}

/// Lloyd k-means; stops at an assignment fixpoint or after `max_iters` iterations.
pub fn kmeans(
    points: &Matrix,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    check_k(points, k)?;
    let mut rng = rng::derive(seed, 0xC1);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let n = points.rows();
    let mut assignments = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        assign_nearest(points, &centers, &mut next);
        repair_empty(points, &mut centers, &mut next);
        let changed = next != assignments;
        assignments.copy_from_slice(&next);
        update_centers(points, &assignments, &mut centers);
        let j = inertia(points, &centers, &assignments);
        if let Some(&prev) = trace.last() {
            debug_assert!(j <= prev + 1e-9 * (1.0 + prev), "Lloyd inertia increased");
        }
        trace.push(j);
        if !changed {
            break;
        }
    }
    Ok(Clustering {
        inertia: *trace.last().unwrap(),
        centers,
        assignments,
        iterations_run: iterations,
        inertia_trace: trace,
    })
}

/// Capacity-respecting assignment: rows in ascending order of
/// `d(best) - d(second best)` each take their nearest non-full center.
fn assign_capped(points: &Matrix, centers: &Matrix, max_size: usize, out: &mut [usize]) {
    let k = centers.rows();
    let n = points.rows();
    let mut regret: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let row = points.row(i);
        let (mut b1, mut b2) = (f64::INFINITY, f64::INFINITY);
        for c in 0..k {
            let d = euclidean(row, centers.row(c));
            if d < b1 {
                b2 = b1;
                b1 = d;
            } else if d < b2 {
                b2 = d;
            }
        }
        let r = if b2.is_finite() { b1 - b2 } else { 0.0 };
        regret.push((r, i));
    }
    regret.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut load = vec![0usize; k];
    for &(_, i) in &regret {
        let row = points.row(i);
        let mut best = (f64::INFINITY, usize::MAX);
        for c in 0..k {
            if load[c] >= max_size {
                continue;
            }
            let d = euclidean(row, centers.row(c));
            if d < best.0 {
                best = (d, c);
            }
        }
        out[i] = best.1;
        load[best.1] += 1;
    }
}

/// K-means where every cluster holds at most `max_size` rows.
pub fn constrained_kmeans(
    points: &Matrix,
    k: usize,
    max_size: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    check_k(points, k)?;
    let n = points.rows();
    if k.saturating_mul(max_size) < n {
        return Err(ClusterError::Infeasible { k, max_size, n });
    }
    let mut rng = rng::derive(seed, 0xC2);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        assign_capped(points, &centers, max_size, &mut next);
        repair_empty(points, &mut centers, &mut next);
        let changed = next != assignments;
        assignments.copy_from_slice(&next);
        update_centers(points, &assignments, &mut centers);
        trace.push(inertia(points, &centers, &assignments));
        if !changed {
            break;
        }
    }
    Ok(Clustering {
        inertia: *trace.last().unwrap(),
        centers,
        assignments,
        iterations_run: iterations,
        inertia_trace: trace,
    })
}
