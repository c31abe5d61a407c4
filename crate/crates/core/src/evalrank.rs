//! Metrics and tournament-style comparison of algorithms across datasets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;

pub const LOG_FLOOR: f64 = 1e-15;
pub const EXACT_WILCOXON_MAX_N: usize = 12;
pub const MIN_WILCOXON_PAIRS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no successful results for dataset {0}")]
    NoResults(String),
    #[error("no dataset is shared by every algorithm in the subset")]
    NoSharedDatasets,
    #[error("need at least {MIN_WILCOXON_PAIRS} non-zero differences, got {0}")]
    TooFewPairs(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("duplicate record for {algorithm}/{dataset} fold {fold}")]
    DuplicateRecord {
        algorithm: String,
        dataset: String,
        fold: u32,
    },
}

pub type Result<T, E = EvalError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_log_likelihood: f64,
}

/// One (algorithm, dataset, fold) outcome; `None` metrics mark a failed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub algorithm: String,
    pub dataset: String,
    pub fold: u32,
    pub metrics: Option<Metrics>,
}

impl ResultRecord {
    pub fn ok(algorithm: &str, dataset: &str, fold: u32, accuracy: f64, mean_ll: f64) -> Self {
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            fold,
            metrics: Some(Metrics {
                accuracy,
                mean_log_likelihood: mean_ll,
            }),
        }
    }

    pub fn failed(algorithm: &str, dataset: &str, fold: u32) -> Self {
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            fold,
            metrics: None,
        }
    }
}

/// Accuracy (argmax, ties to the lowest class) and mean log probability of the true label.
pub fn metrics(probs: &Matrix, labels: &[usize]) -> Result<Metrics> {
    if probs.rows() != labels.len() {
        return Err(EvalError::ShapeMismatch("one probability row per label"));
    }
    if labels.iter().any(|&y| y >= probs.cols()) {
        return Err(EvalError::ShapeMismatch(
            "label outside probability columns",
        ));
    }
    if labels.is_empty() {
        return Err(EvalError::ShapeMismatch("no rows"));
    }
    let mut hits = 0usize;
    let mut ll = 0.0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        let mut best = 0;
        for (j, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = j;
            }
        }
        hits += usize::from(best == y);
        ll += libm::log(row[y].max(LOG_FLOOR));
    }
    let n = labels.len() as f64;
    Ok(Metrics {
        accuracy: hits as f64 / n,
        mean_log_likelihood: ll / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMetric {
    /// Accuracy first, mean log-likelihood to break ties.
    #[default]
    Accuracy,
    LogLikelihood,
}

impl RankMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accuracy => "accuracy",
            Self::LogLikelihood => "log_likelihood",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accuracy" | "acc" => Some(Self::Accuracy),
            "log_likelihood" | "ll" => Some(Self::LogLikelihood),
            _ => None,
        }
    }
}

/// Fold-averaged outcomes, keyed by dataset then algorithm.
/// An algorithm with any failed fold on a dataset is absent for that dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    cells: BTreeMap<String, BTreeMap<String, Metrics>>,
}

impl ResultTable {
    pub fn new(records: &[ResultRecord]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut acc: BTreeMap<(&str, &str), (f64, f64, usize, bool)> = BTreeMap::new();
        for r in records {
            if !seen.insert((r.algorithm.as_str(), r.dataset.as_str(), r.fold)) {
                return Err(EvalError::DuplicateRecord {
                    algorithm: r.algorithm.clone(),
                    dataset: r.dataset.clone(),
                    fold: r.fold,
                });
            }
            let e = acc
                .entry((r.dataset.as_str(), r.algorithm.as_str()))
                .or_insert((0.0, 0.0, 0, false));
            match r.metrics {
                Some(m) => {
                    e.0 += m.accuracy;
                    e.1 += m.mean_log_likelihood;
                    e.2 += 1;
                }
                None => e.3 = true,
            }
        }
        let mut cells: BTreeMap<String, BTreeMap<String, Metrics>> = BTreeMap::new();
        for ((d, a), (sa, sl, n, failed)) in acc {
            if failed || n == 0 {
                continue;
            }
            cells.entry(d.into()).or_default().insert(
                a.into(),
                Metrics {
                    accuracy: sa / n as f64,
                    mean_log_likelihood: sl / n as f64,
                },
            );
        }
        let algorithms: BTreeSet<&str> = records.iter().map(|r| r.algorithm.as_str()).collect();
        let datasets: BTreeSet<&str> = records.iter().map(|r| r.dataset.as_str()).collect();
        Ok(Self {
            algorithms: algorithms.into_iter().map(String::from).collect(),
            datasets: datasets.into_iter().map(String::from).collect(),
            cells,
        })
    }

    pub fn get(&self, dataset: &str, algorithm: &str) -> Option<Metrics> {
        self.cells.get(dataset)?.get(algorithm).copied()
    }

    /// Algorithms with a successful result on `dataset`.
    pub fn ran_on(&self, dataset: &str) -> Vec<&str> {
        self.cells
            .get(dataset)
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Fractional ranks (1 = best) among `algorithms`, all of which must have run on `dataset`.
    fn rank_among(&self, dataset: &str, algorithms: &[&str], metric: RankMetric) -> Vec<f64> {
        let key = |a: &str| {
            let m = self.get(dataset, a).expect("algorithm ran on dataset");
            match metric {
                RankMetric::Accuracy => (m.accuracy, m.mean_log_likelihood),
                RankMetric::LogLikelihood => (m.mean_log_likelihood, m.mean_log_likelihood),
            }
        };
        let keys: Vec<(f64, f64)> = algorithms.iter().map(|a| key(a)).collect();
        let mut order: Vec<usize> = (0..keys.len()).collect();
        let cmp = |a: &(f64, f64), b: &(f64, f64)| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1));
        order.sort_by(|&i, &j| cmp(&keys[i], &keys[j]));
        let mut ranks = vec![0.0; keys.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && cmp(&keys[order[start]], &keys[order[end]]).is_eq() {
                end += 1;
            }
            let r = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                ranks[i] = r;
            }
            start = end;
        }
        ranks
    }

    /// Ranking of every algorithm that ran on `dataset`, in name order.
    pub fn rank_algorithms(&self, dataset: &str, metric: RankMetric) -> Result<Vec<(String, f64)>> {
        let algs = self.ran_on(dataset);
        if algs.is_empty() {
            return Err(EvalError::NoResults(dataset.into()));
        }
        let ranks = self.rank_among(dataset, &algs, metric);
        Ok(algs.into_iter().map(String::from).zip(ranks).collect())
    }

    /// Datasets on which every algorithm in `subset` succeeded.
    pub fn shared_datasets(&self, subset: &[&str]) -> Vec<&str> {
        self.datasets
            .iter()
            .filter(|d| subset.iter().all(|a| self.get(d, a).is_some()))
            .map(String::as_str)
            .collect()
    }
}

pub fn rank_algorithms(
    records: &[ResultRecord],
    dataset: &str,
    metric: RankMetric,
) -> Result<Vec<(String, f64)>> {
    ResultTable::new(records)?.rank_algorithms(dataset, metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairRecord {
    pub wins: u32,
    pub ties: u32,
    pub losses: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondorcetTally {
    /// Name order.
    pub algorithms: Vec<String>,
    /// Datasets-level rank superiorities summed over opponents.
    pub votes: Vec<u32>,
    /// `pairwise[i][j]` counts datasets ranking both where `i` ranked above, level with, or below `j`.
    pub pairwise: Vec<Vec<PairRecord>>,
    /// Head-to-head outcomes per algorithm: opponents beaten, drawn, lost to.
    pub head_to_head: Vec<PairRecord>,
    pub winner: Option<String>,
}

impl CondorcetTally {
    pub fn index_of(&self, algorithm: &str) -> Option<usize> {
        self.algorithms.iter().position(|a| a == algorithm)
    }

    /// Row order for reporting: votes descending, then name.
    pub fn report_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.algorithms.len()).collect();
        idx.sort_by(|&a, &b| self.votes[b].cmp(&self.votes[a]).then(a.cmp(&b)));
        idx
    }
}

pub fn condorcet(records: &[ResultRecord], metric: RankMetric) -> Result<CondorcetTally> {
    let table = ResultTable::new(records)?;
    let algs = table.algorithms.clone();
    let pos: BTreeMap<&str, usize> = algs
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let a = algs.len();
    let mut pairwise = vec![vec![PairRecord::default(); a]; a];
    for d in &table.datasets {
        let present = table.ran_on(d);
        if present.len() < 2 {
            continue;
        }
        let ranks = table.rank_among(d, &present, metric);
        for (x, ax) in present.iter().enumerate() {
            for (y, ay) in present.iter().enumerate() {
                if x == y {
                    continue;
                }
                let cell = &mut pairwise[pos[ax]][pos[ay]];
                match ranks[x].total_cmp(&ranks[y]) {
                    core::cmp::Ordering::Less => cell.wins += 1,
                    core::cmp::Ordering::Equal => cell.ties += 1,
                    core::cmp::Ordering::Greater => cell.losses += 1,
                }
            }
        }
    }
    let votes = pairwise
        .iter()
        .map(|row| row.iter().map(|c| c.wins).sum())
        .collect();
    let head_to_head: Vec<PairRecord> = (0..a)
        .map(|i| {
            let mut h = PairRecord::default();
            for j in (0..a).filter(|&j| j != i) {
                let c = pairwise[i][j];
                match c.wins.cmp(&c.losses) {
                    core::cmp::Ordering::Greater => h.wins += 1,
                    core::cmp::Ordering::Equal => h.ties += 1,
                    core::cmp::Ordering::Less => h.losses += 1,
                }
            }
            h
        })
        .collect();
    let winner = (0..a)
        .find(|&i| a >= 2 && head_to_head[i].wins as usize == a - 1)
        .map(|i| algs[i].clone());
    Ok(CondorcetTally {
        algorithms: algs,
        votes,
        pairwise,
        head_to_head,
        winner,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub algorithm: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRankTable {
    pub shared_datasets: Vec<String>,
    /// In subset order.
    pub rows: Vec<RankSummary>,
    /// `ranks[d][a]`, rank of subset member `a` on shared dataset `d`.
    pub ranks: Vec<Vec<f64>>,
}

/// Ranks the subset against itself on the datasets every member completed.
pub fn mean_rank_table(
    records: &[ResultRecord],
    subset: &[&str],
    metric: RankMetric,
) -> Result<MeanRankTable> {
    let table = ResultTable::new(records)?;
    let shared = table.shared_datasets(subset);
    if shared.is_empty() || subset.is_empty() {
        return Err(EvalError::NoSharedDatasets);
    }
    let ranks: Vec<Vec<f64>> = shared
        .iter()
        .map(|d| table.rank_among(d, subset, metric))
        .collect();
    let rows = subset
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let mut col: Vec<f64> = ranks.iter().map(|r| r[a]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let m = col.len() / 2;
            let median = if col.len() % 2 == 1 {
                col[m]
            } else {
                (col[m - 1] + col[m]) / 2.0
            };
            RankSummary {
                algorithm: String::from(*name),
                mean,
                std: libm::sqrt(var),
                median,
                min: col[0],
                max: col[col.len() - 1],
            }
        })
        .collect();
    Ok(MeanRankTable {
        shared_datasets: shared.into_iter().map(String::from).collect(),
        rows,
        ranks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Doubled average ranks of `|d|`, so tied ranks stay integral.
fn doubled_abs_ranks(diffs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| libm::fabs(diffs[i]).total_cmp(&libm::fabs(diffs[j])));
    let mut ranks = vec![0u64; diffs.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && libm::fabs(diffs[order[end]]) == libm::fabs(diffs[order[start]])
        {
            end += 1;
        }
        // average of 1-based ranks start+1..=end, doubled
        let r2 = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r2;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    (ranks, tie_sizes)
}

/// Two-sided signed-rank test on paired samples.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(EvalError::ShapeMismatch("paired samples differ in length"));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < MIN_WILCOXON_PAIRS {
        return Err(EvalError::TooFewPairs(n));
    }
    let (ranks2, ties) = doubled_abs_ranks(&diffs);
    let w_plus2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let statistic = w_plus2 as f64 / 2.0;
    if n <= EXACT_WILCOXON_MAX_N {
        // P(W+ >= hi) + P(W+ <= total - hi) with hi the farther tail from the centre
        let hi = w_plus2.max(total2 - w_plus2);
        let lo = total2 - hi;
        let mut extreme = 0u64;
        for mask in 0u32..(1 << n) {
            let s: u64 = (0..n)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| ranks2[i])
                .sum();
            if s >= hi || s <= lo {
                extreme += 1;
            }
        }
        return Ok(WilcoxonResult {
            statistic,
            p_value: (extreme as f64 / (1u64 << n) as f64).min(1.0),
            n,
            exact: true,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / libm::sqrt(var);
    Ok(WilcoxonResult {
        statistic,
        p_value: libm::erfc(z / core::f64::consts::SQRT_2).min(1.0),
        n,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use proptest::prelude::*;

    fn rec(a: &str, d: &str, acc: f64, ll: f64) -> ResultRecord {
        ResultRecord::ok(a, d, 0, acc, ll)
    }

    #[test]
    fn metrics_closed_forms() {
        let onehot = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let m = metrics(&onehot, &[0, 1]).unwrap();
        assert_eq!((m.accuracy, m.mean_log_likelihood), (1.0, 0.0));
        let uniform = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]);
        let m = metrics(&uniform, &[0, 1]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.mean_log_likelihood + core::f64::consts::LN_2).abs() < 1e-15);
        let zero = Matrix::from_rows(&[[1.0, 0.0]]);
        assert_eq!(
            metrics(&zero, &[1]).unwrap().mean_log_likelihood,
            libm::log(1e-15)
        );
        assert!(metrics(&zero, &[0, 1]).is_err());
    }

    #[test]
    fn strict_tie_broken_and_full_ties() {
        let r = [
            rec("a", "d", 0.9, -0.1),
            rec("b", "d", 0.8, -0.1),
            rec("c", "d", 0.7, -0.1),
        ];
        let ranks = rank_algorithms(&r, "d", RankMetric::Accuracy).unwrap();
        assert_eq!(
            ranks.iter().map(|x| x.1).collect::<Vec<_>>(),
            [1.0, 2.0, 3.0]
        );
        let r = [rec("a", "d", 0.9, -0.3), rec("b", "d", 0.9, -0.2)];
        let ranks = rank_algorithms(&r, "d", RankMetric::Accuracy).unwrap();
        assert_eq!(ranks, [("a".into(), 2.0), ("b".into(), 1.0)]);
        let r = [rec("a", "d", 0.9, -0.2), rec("b", "d", 0.9, -0.2)];
        let ranks = rank_algorithms(&r, "d", RankMetric::Accuracy).unwrap();
        assert_eq!(ranks.iter().map(|x| x.1).collect::<Vec<_>>(), [1.5, 1.5]);
        assert_eq!(
            rank_algorithms(&r, "missing", RankMetric::Accuracy),
            Err(EvalError::NoResults("missing".into()))
        );
    }

    #[test]
    fn failed_fold_drops_the_algorithm_from_the_dataset() {
        let r = [
            ResultRecord::ok("a", "d", 0, 0.9, -0.1),
            ResultRecord::failed("a", "d", 1),
            ResultRecord::ok("b", "d", 0, 0.5, -0.7),
        ];
        let ranks = rank_algorithms(&r, "d", RankMetric::Accuracy).unwrap();
        assert_eq!(ranks, [("b".into(), 1.0)]);
    }

    #[test]
    fn duplicate_records_rejected() {
        let r = [rec("a", "d", 0.9, -0.1), rec("a", "d", 0.8, -0.1)];
        assert!(matches!(
            ResultTable::new(&r),
            Err(EvalError::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn dominant_algorithm_wins_every_pair() {
        let mut r = Vec::new();
        for d in 0..6 {
            let ds = format!("d{d}");
            r.push(rec("best", &ds, 0.95, -0.1));
            for (k, a) in ["p", "q", "s"].iter().enumerate() {
                r.push(rec(a, &ds, 0.5 + 0.1 * ((k + d) % 3) as f64, -0.5));
            }
        }
        let t = condorcet(&r, RankMetric::Accuracy).unwrap();
        let i = t.index_of("best").unwrap();
        assert_eq!(
            t.head_to_head[i],
            PairRecord {
                wins: 3,
                ties: 0,
                losses: 0
            }
        );
        assert_eq!(t.winner.as_deref(), Some("best"));
        assert_eq!(t.votes[i], 18);
    }

    #[test]
    fn rock_paper_scissors_has_no_winner() {
        let r = [
            rec("rock", "d1", 0.9, 0.0),
            rec("paper", "d1", 0.8, 0.0),
            rec("scissors", "d1", 0.7, 0.0),
            rec("paper", "d2", 0.9, 0.0),
            rec("scissors", "d2", 0.8, 0.0),
            rec("rock", "d2", 0.7, 0.0),
            rec("scissors", "d3", 0.9, 0.0),
            rec("rock", "d3", 0.8, 0.0),
            rec("paper", "d3", 0.7, 0.0),
        ];
        let t = condorcet(&r, RankMetric::Accuracy).unwrap();
        assert_eq!(t.winner, None);
        assert!(t.head_to_head.iter().all(|h| h.wins == 1 && h.losses == 1));
    }

    #[test]
    fn single_dataset_mean_ranks() {
        let r = [
            rec("a", "d", 0.9, -0.1),
            rec("b", "d", 0.8, -0.1),
            rec("c", "d", 0.7, -0.1),
        ];
        let t = mean_rank_table(&r, &["a", "b", "c"], RankMetric::Accuracy).unwrap();
        assert_eq!(
            t.rows.iter().map(|s| s.mean).collect::<Vec<_>>(),
            [1.0, 2.0, 3.0]
        );
        assert!(t.rows.iter().all(|s| s.std == 0.0));
        assert_eq!(
            mean_rank_table(&r, &["a", "zz"], RankMetric::Accuracy),
            Err(EvalError::NoSharedDatasets)
        );
    }

    #[test]
    fn hand_enumerated_mean_ranks() {
        // d1: a > b > c; d2: b > a = c (LL tie-break a); d3: c > b > a; d4: a = b (full tie) > c
        // a: 1, 2, 3, 1.5 -> mean 1.875; b: 2, 1, 2, 1.5 -> 1.625; c: 3, 3, 1, 3 -> 2.5
        let r = [
            rec("a", "d1", 0.9, -0.1),
            rec("b", "d1", 0.8, -0.1),
            rec("c", "d1", 0.7, -0.1),
            rec("a", "d2", 0.7, -0.2),
            rec("b", "d2", 0.9, -0.1),
            rec("c", "d2", 0.7, -0.3),
            rec("a", "d3", 0.6, -0.1),
            rec("b", "d3", 0.7, -0.1),
            rec("c", "d3", 0.8, -0.1),
            rec("a", "d4", 0.9, -0.1),
            rec("b", "d4", 0.9, -0.1),
            rec("c", "d4", 0.1, -0.9),
            rec("a", "d5", 0.9, -0.1),
            ResultRecord::failed("c", "d5", 0),
        ];
        let t = mean_rank_table(&r, &["a", "b", "c"], RankMetric::Accuracy).unwrap();
        assert_eq!(t.shared_datasets, ["d1", "d2", "d3", "d4"]);
        let means: Vec<f64> = t.rows.iter().map(|s| s.mean).collect();
        assert_eq!(means, [1.875, 1.625, 2.5]);
        assert_eq!(t.rows[0].median, 1.75);
        assert_eq!((t.rows[2].min, t.rows[2].max), (1.0, 3.0));
        // dropping c from the subset only grows the shared set
        let t2 = mean_rank_table(&r, &["a", "b"], RankMetric::Accuracy).unwrap();
        assert_eq!(t2.shared_datasets, ["d1", "d2", "d3", "d4"]);
        let t3 = mean_rank_table(&r, &["a"], RankMetric::Accuracy).unwrap();
        assert_eq!(t3.shared_datasets.len(), 5);
    }

    #[test]
    fn wilcoxon_all_positive_six() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.0; 6];
        let w = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(w.statistic, 21.0);
        assert_eq!(w.p_value, 0.03125);
        assert!(w.exact);
        assert_eq!(wilcoxon_signed_rank(&x, &x), Err(EvalError::TooFewPairs(0)));
    }

    #[test]
    fn wilcoxon_ties_use_average_ranks() {
        // |d| = 1,1,2,3,3: ranks 1.5,1.5,3,4.5,4.5; positives 1,2,3 -> 1.5+3+4.5
        let x = [1.0, -1.0, 2.0, 3.0, -3.0];
        let w = wilcoxon_signed_rank(&x, &[0.0; 5]).unwrap();
        assert_eq!(w.statistic, 9.0);
        // doubled ranks {3,3,6,9,9}: only the four subsets summing to 15 sit strictly inside the tails
        assert_eq!(w.p_value, 28.0 / 32.0);
    }

    fn monotone(v: f64) -> f64 {
        libm::exp(3.0 * v) - 7.0
    }

    proptest! {
        #[test]
        fn condorcet_is_antisymmetric_and_conserves_votes(
            scores in proptest::collection::vec(0u8..6, 5 * 8)
        ) {
            let names = ["a", "b", "c", "d", "e"];
            let mut r = Vec::new();
            for d in 0..8 {
                for (k, a) in names.iter().enumerate() {
                    let s = scores[d * 5 + k];
                    // leave some holes so algorithms miss datasets
                    if s == 5 && k == d % 5 { continue; }
                    r.push(rec(a, &format!("d{d}"), s as f64 / 10.0, -(k as f64)));
                }
            }
            let t = condorcet(&r, RankMetric::Accuracy).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(t.pairwise[i][j].wins, t.pairwise[j][i].losses);
                    prop_assert_eq!(t.pairwise[i][j].ties, t.pairwise[j][i].ties);
                }
            }
            // LL key is distinct per algorithm, so no residual ties
            let table = ResultTable::new(&r).unwrap();
            let expected: u32 = table.datasets.iter().map(|d| {
                let m = table.ran_on(d).len() as u32;
                m * m.saturating_sub(1) / 2
            }).sum();
            prop_assert_eq!(t.votes.iter().sum::<u32>(), expected);
        }

        #[test]
        fn rankings_ignore_monotone_rescaling(
            accs in proptest::collection::vec(0u8..10, 4 * 5),
            lls in proptest::collection::vec(0u8..4, 4 * 5),
        ) {
            let names = ["a", "b", "c", "d"];
            let mut r = Vec::new();
            let mut s = Vec::new();
            for d in 0..5 {
                for (k, a) in names.iter().enumerate() {
                    let acc = accs[d * 4 + k] as f64 / 10.0;
                    let ll = -(lls[d * 4 + k] as f64);
                    r.push(rec(a, &format!("d{d}"), acc, ll));
                    s.push(rec(a, &format!("d{d}"), monotone(acc), ll));
                }
            }
            prop_assert_eq!(condorcet(&r, RankMetric::Accuracy).unwrap(), condorcet(&s, RankMetric::Accuracy).unwrap());
            prop_assert_eq!(
                mean_rank_table(&r, &names, RankMetric::Accuracy).unwrap().ranks,
                mean_rank_table(&s, &names, RankMetric::Accuracy).unwrap().ranks
            );
        }
    }
}
