//! Seeded synthetic datasets used by tests, the acceptance suite and demos.

use mixturepfn_core::data::TabularDataset;
use mixturepfn_core::rng::{self, gaussian};
use mixturepfn_core::Matrix;
use rand::Rng;

fn dataset(x: Vec<f64>, n: usize, d: usize, labels: Vec<usize>, c: usize) -> TabularDataset {
    TabularDataset::new(Matrix::from_vec(n, d, x), labels, c).expect("labels in range")
}

/// Two unit-variance Gaussian blobs centred at `(-3, 0)` and `(3, 0)`, alternating labels.
pub fn two_blobs(n: usize, seed: u64) -> TabularDataset {
    let mut r = rng::seeded(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        x.push(if class == 0 { -3.0 } else { 3.0 } + gaussian(&mut r));
        x.push(gaussian(&mut r));
        y.push(class);
    }
    dataset(x, n, 2, y, 2)
}

/// Uniform points in the unit square; class 0 inside the quarter disc of
/// radius `sqrt(2 / pi)` around the origin (half the area), class 1 outside.
pub fn quarter_circle(n: usize, seed: u64) -> TabularDataset {
    let r2 = 2.0 / std::f64::consts::PI;
    let mut r = rng::seeded(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b): (f64, f64) = (r.gen(), r.gen());
        x.push(a);
        x.push(b);
        y.push(usize::from(a * a + b * b >= r2));
    }
    dataset(x, n, 2, y, 2)
}

/// Isotropic Gaussian mixture with `k` centres drawn at scale `spread`.
/// Labels are the generating component.
pub fn gaussian_mixture(n: usize, d: usize, k: usize, spread: f64, seed: u64) -> TabularDataset {
    let mut r = rng::seeded(seed);
    let centers: Vec<f64> = (0..k * d).map(|_| spread * gaussian(&mut r)).collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = r.gen_range(0..k);
        for j in 0..d {
            x.push(centers[c * d + j] + gaussian(&mut r));
        }
        y.push(c);
    }
    dataset(x, n, d, y, k.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratifiedBlobs {
    pub n: usize,
    pub clusters: usize,
    pub classes: usize,
    pub dim: usize,
    /// Scale of the cluster centres relative to unit within-cluster spread.
    pub spread: f64,
    pub label_noise: f64,
}

impl Default for StratifiedBlobs {
    fn default() -> Self {
        Self {
            n: 20_000,
            clusters: 8,
            classes: 4,
            dim: 4,
            spread: 6.0,
            label_noise: 0.05,
        }
    }
}

impl StratifiedBlobs {
    /// Equal-size clusters, each split by its own random hyperplane between
    /// two cluster-specific classes; a `label_noise` fraction of labels is
    /// then redrawn uniformly.
    pub fn generate(&self, seed: u64) -> TabularDataset {
        let (d, k, c) = (self.dim, self.clusters, self.classes);
        let mut r = rng::seeded(seed);
        let centers: Vec<f64> = (0..k * d).map(|_| self.spread * gaussian(&mut r)).collect();
        let normals: Vec<f64> = (0..k * d).map(|_| gaussian(&mut r)).collect();
        let mut x = Vec::with_capacity(self.n * d);
        let mut y = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let cl = i % k;
            let mut side = 0.0;
            for j in 0..d {
                let off = gaussian(&mut r);
                x.push(centers[cl * d + j] + off);
                side += off * normals[cl * d + j];
            }
            let mut label = if side > 0.0 { cl % c } else { (cl + 1) % c };
            if r.gen::<f64>() < self.label_noise {
                label = r.gen_range(0..c);
            }
            y.push(label);
        }
        dataset(x, self.n, d, y, c)
    }
}

/// Clusters stretched 20x along a per-cluster random axis, which plain
/// k-means tends to cut across.
pub fn elongated_clusters(n: usize, d: usize, k: usize, seed: u64) -> TabularDataset {
    let mut r = rng::seeded(seed);
    let centers: Vec<f64> = (0..k * d).map(|_| 8.0 * gaussian(&mut r)).collect();
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / norm).collect()
        })
        .collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let t = 20.0 * gaussian(&mut r);
        for j in 0..d {
            x.push(centers[c * d + j] + t * axes[c][j] + gaussian(&mut r));
        }
        y.push(c % 2);
    }
    dataset(x, n, d, y, 2)
}

/// Standardises columns in place using population statistics.
pub fn standardize(ds: &mut TabularDataset) {
    let (n, d) = (ds.n_rows(), ds.n_features());
    for j in 0..d {
        let mean = (0..n).map(|i| ds.features.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (ds.features.get(i, j) - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let v = ds.features.get(i, j);
            ds.features
                .set(i, j, if sd > 0.0 { (v - mean) / sd } else { 0.0 });
        }
    }
}

/// First `n_train` rows versus the rest.
pub fn split_head(ds: &TabularDataset, n_train: usize) -> (TabularDataset, TabularDataset) {
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..ds.n_rows()).collect();
    (ds.subset(&train), ds.subset(&test))
}
