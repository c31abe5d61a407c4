use mixturepfn_core::matrix::{euclidean, Matrix};
use mixturepfn_core::neighbors::NeighborIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive scan ordered by (distance, index).
fn brute(points: &Matrix, q: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter_rows()
        .map(|p| euclidean(p, q))
        .zip(0..)
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|p| p.1).collect()
}

fn instance(r: &mut ChaCha8Rng) -> (Matrix, usize) {
    let m = r.gen_range(1..=2000);
    let d = r.gen_range(1..=8);
    // coarse integer grids force exact distance ties
    let grid = r.gen_bool(0.5);
    let data = (0..m * d)
        .map(|_| {
            if grid {
                r.gen_range(-3..=3) as f64
            } else {
                r.gen_range(-10.0..10.0)
            }
        })
        .collect();
    (Matrix::from_vec(m, d, data), r.gen_range(1..=32))
}

#[test]
fn two_hundred_instances_match_exhaustive_scan() {
    let mut r = ChaCha8Rng::seed_from_u64(0x4B4E4E);
    for case in 0..200 {
        let (points, leaf) = instance(&mut r);
        let (m, d) = (points.rows(), points.cols());
        let idx = NeighborIndex::build(points.clone(), leaf).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = if r.gen_bool(0.3) {
                points.row(r.gen_range(0..m)).to_vec()
            } else {
                (0..d).map(|_| r.gen_range(-12.0..12.0)).collect()
            };
            let k = r.gen_range(1..=m.min(50));
            let got: Vec<usize> = idx.knn(&q, k).unwrap().into_iter().map(|p| p.0).collect();
            assert_eq!(
                got,
                brute(&points, &q, k),
                "case {case}, m={m}, d={d}, k={k}"
            );
            assert_eq!(
                idx.nns(&q).unwrap(),
                brute(&points, &q, 1)[0],
                "case {case}"
            );
        }
    }
}

#[test]
fn returned_distances_are_exact_and_sorted() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (points, leaf) = instance(&mut r);
    let idx = NeighborIndex::build(points.clone(), leaf).unwrap();
    let q = vec![0.5; points.cols()];
    let res = idx.knn(&q, points.rows()).unwrap();
    assert_eq!(res.len(), points.rows());
    for w in res.windows(2) {
        assert!(w[0].1 <= w[1].1);
    }
    for (i, dist) in res {
        assert_eq!(dist, euclidean(points.row(i), &q));
    }
}
