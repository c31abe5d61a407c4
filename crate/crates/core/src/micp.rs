//! Sparse mixture of in-context prompters.
//!
//! K-means partitions the training rows; each prompter owns a fixed support
//! of `B` training rows (the k-NN of its center when its cluster is smaller
//! than `B`, otherwise a uniform subsample of the cluster). A nearest-center
//! router sends every query to one prompter, and queries routed to the same
//! prompter are batched into one prompt.
//!
//! The k-NN prompting baselines, which build a context per query or per
//! batch directly from the training index, live here as well.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::clustering::{self, ClusterError, Clustering};
use crate::data::TabularDataset;
use crate::matrix::Matrix;
use crate::neighbors::{NeighborError, NeighborIndex, DEFAULT_LEAF_SIZE};
use crate::rng;

/// Context budget matching the external predictor's context limit.
pub const DEFAULT_BUDGET: usize = 3000;
pub const DEFAULT_INFERENCE_BATCH: usize = 1024;
pub const DEFAULT_KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MicpError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("prompter {0} has an invalid support list")]
    InvalidSupport(usize),
    #[error("prompt is inconsistent: {0}")]
    InvalidPrompt(&'static str),
}

pub type Result<T, E = MicpError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    Plain,
    Constrained,
}

impl ClusterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterMode::Plain => "plain_kmeans",
            ClusterMode::Constrained => "constrained_kmeans",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" | "plain_kmeans" => Some(ClusterMode::Plain),
            "constrained" | "constrained_kmeans" => Some(ClusterMode::Constrained),
            _ => None,
        }
    }
}

/// Prompter count `max(1, ceil(gamma * n_train / budget))`, capped at `n_train`.
pub fn num_prompters(gamma: f64, n_train: usize, budget: usize) -> usize {
    if n_train == 0 || budget == 0 {
        return 1;
    }
    let x = gamma * n_train as f64 / budget as f64;
    let r = libm::round(x);
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        libm::ceil(x)
    };
    (k as usize).clamp(1, n_train)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicpConfig {
    pub budget: usize,
    pub gamma: f64,
    pub mode: ClusterMode,
    pub seed: u64,
    pub kmeans_iters: usize,
    /// Training rows route to their own cluster instead of the nearest center.
    pub self_routing: bool,
    pub leaf_size: usize,
}

impl Default for MicpConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            gamma: 1.0,
            mode: ClusterMode::Plain,
            seed: 0,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            self_routing: false,
            leaf_size: DEFAULT_LEAF_SIZE,
        }
    }
}

/// A fitted router plus the K prompter supports.
#[derive(Debug, Clone)]
pub struct MicpModel {
    centers: Matrix,
    center_index: NeighborIndex,
    train_index: NeighborIndex,
    prompt_supports: Vec<Vec<usize>>,
    train_assignments: Option<Vec<usize>>,
    cluster_sizes: Vec<usize>,
    budget: usize,
    gamma: f64,
    mode: ClusterMode,
    seed: u64,
    self_routing: bool,
}

/// Fits clustering, router and prompter supports on the training features.
pub fn fit(train: &Matrix, cfg: &MicpConfig) -> Result<MicpModel> {
    if cfg.budget == 0 {
        return Err(MicpError::InvalidConfig("budget must be positive"));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(MicpError::InvalidConfig("gamma must be positive"));
    }
    let n = train.rows();
    if n == 0 {
        return Err(MicpError::Cluster(ClusterError::Empty));
    }
    let train_index = NeighborIndex::build(train.clone(), cfg.leaf_size)?;

    if n <= cfg.budget {
        // one prompter whose context is the whole training set
        let clustering = clustering::kmeans(train, 1, 1, cfg.seed)?;
        return assemble_model(
            clustering.centers,
            vec![(0..n).collect()],
            Some(clustering.assignments),
            vec![n],
            train_index,
            cfg,
        );
    }

    let k = num_prompters(cfg.gamma, n, cfg.budget);
    let clustering = match cfg.mode {
        ClusterMode::Plain => clustering::kmeans(train, k, cfg.kmeans_iters, cfg.seed)?,
        ClusterMode::Constrained => {
            clustering::constrained_kmeans(train, k, cfg.budget, cfg.kmeans_iters, cfg.seed)?
        }
    };
    let supports = build_supports(&clustering, &train_index, cfg)?;
    let sizes = clustering.sizes();
    assemble_model(
        clustering.centers,
        supports,
        Some(clustering.assignments),
        sizes,
        train_index,
        cfg,
    )
}

fn build_supports(
    clustering: &Clustering,
    train_index: &NeighborIndex,
    cfg: &MicpConfig,
) -> Result<Vec<Vec<usize>>> {
    let n = train_index.len();
    let budget = cfg.budget.min(n);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clustering.k()];
    for (i, &a) in clustering.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut supports = Vec::with_capacity(clustering.k());
    for (k, cluster) in members.iter().enumerate() {
        let mut support = if cluster.len() < cfg.budget {
            let center = clustering.centers.row(k);
            match cfg.mode {
                ClusterMode::Plain => train_index
                    .knn(center, budget)?
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect(),
                ClusterMode::Constrained => {
                    cluster_anchored_knn(train_index, center, cluster, budget)?
                }
            }
        } else {
            let mut rng = rng::derive(cfg.seed, 0x5A_0000 + k as u64);
            index::sample(&mut rng, cluster.len(), cfg.budget)
                .into_iter()
                .map(|p| cluster[p])
                .collect()
        };
        support.sort_unstable();
        supports.push(support);
    }
    Ok(supports)
}

/// The cluster's own rows plus the rows nearest its center until `budget` is
/// reached. Equals the plain k-NN of the center whenever the cluster already
/// sits inside that neighbourhood, and always contains the cluster.
fn cluster_anchored_knn(
    train_index: &NeighborIndex,
    center: &[f64],
    cluster: &[usize],
    budget: usize,
) -> Result<Vec<usize>> {
    let mut in_cluster = vec![false; train_index.len()];
    for &i in cluster {
        in_cluster[i] = true;
    }
    let mut out = cluster.to_vec();
    let extra = budget - cluster.len();
    if extra > 0 {
        let want = (budget).min(train_index.len());
        let ranked = train_index.knn(center, want)?;
        let mut outside: Vec<usize> = ranked
            .iter()
            .map(|&(i, _)| i)
            .filter(|&i| !in_cluster[i])
            .take(extra)
            .collect();
        if outside.len() < extra {
            // the neighbourhood was mostly cluster rows; widen the search
            let ranked = train_index.knn(center, (want + extra).min(train_index.len()))?;
            outside = ranked
                .iter()
                .map(|&(i, _)| i)
                .filter(|&i| !in_cluster[i])
                .take(extra)
                .collect();
        }
        out.extend(outside);
    }
    Ok(out)
}

fn assemble_model(
    centers: Matrix,
    prompt_supports: Vec<Vec<usize>>,
    train_assignments: Option<Vec<usize>>,
    cluster_sizes: Vec<usize>,
    train_index: NeighborIndex,
    cfg: &MicpConfig,
) -> Result<MicpModel> {
    let center_index = NeighborIndex::build(centers.clone(), cfg.leaf_size.min(8))?;
    Ok(MicpModel {
        centers,
        center_index,
        train_index,
        prompt_supports,
        train_assignments,
        cluster_sizes,
        budget: cfg.budget,
        gamma: cfg.gamma,
        mode: cfg.mode,
        seed: cfg.seed,
        self_routing: cfg.self_routing,
    })
}

/// Which training rows feed a prompt's context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextSource {
    Prompter(usize),
    Rows(Vec<usize>),
}

/// A prompt before its features are gathered: context source plus query rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPlan {
    pub context: ContextSource,
    pub query_rows: Vec<usize>,
}

impl PromptPlan {
    pub fn prompter_id(&self) -> Option<usize> {
        match self.context {
            ContextSource::Prompter(k) => Some(k),
            ContextSource::Rows(_) => None,
        }
    }
}

/// One predictor input: a labelled context and a batch of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub context_features: Matrix,
    pub context_labels: Vec<usize>,
    pub query_features: Matrix,
    /// Original positions of the queries, for scattering predictions back.
    pub query_rows: Vec<usize>,
    pub prompter_id: Option<usize>,
    pub n_classes: usize,
}

impl Prompt {
    pub fn new(
        context_features: Matrix,
        context_labels: Vec<usize>,
        query_features: Matrix,
        query_rows: Vec<usize>,
        prompter_id: Option<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if context_features.rows() != context_labels.len() {
            return Err(MicpError::InvalidPrompt("context rows and labels differ"));
        }
        if query_features.rows() != query_rows.len() {
            return Err(MicpError::InvalidPrompt("query rows and row ids differ"));
        }
        if context_features.rows() > 0
            && query_features.rows() > 0
            && context_features.cols() != query_features.cols()
        {
            return Err(MicpError::DimensionMismatch {
                expected: context_features.cols(),
                got: query_features.cols(),
            });
        }
        if context_labels.iter().any(|&y| y >= n_classes) {
            return Err(MicpError::InvalidPrompt("context label out of range"));
        }
        Ok(Self {
            context_features,
            context_labels,
            query_features,
            query_rows,
            prompter_id,
            n_classes,
        })
    }

    pub fn context_len(&self) -> usize {
        self.context_labels.len()
    }

    pub fn n_queries(&self) -> usize {
        self.query_rows.len()
    }
}

impl MicpModel {
    /// Rebuilds a model from persisted centers and supports.
    pub fn from_parts(
        centers: Matrix,
        prompt_supports: Vec<Vec<usize>>,
        train: &Matrix,
        cfg: &MicpConfig,
    ) -> Result<Self> {
        if centers.rows() != prompt_supports.len() || centers.rows() == 0 {
            return Err(MicpError::InvalidConfig("one support list per center"));
        }
        if centers.cols() != train.cols() {
            return Err(MicpError::DimensionMismatch {
                expected: centers.cols(),
                got: train.cols(),
            });
        }
        for (k, s) in prompt_supports.iter().enumerate() {
            if s.len() > cfg.budget || s.iter().any(|&i| i >= train.rows()) {
                return Err(MicpError::InvalidSupport(k));
            }
        }
        let train_index = NeighborIndex::build(train.clone(), cfg.leaf_size)?;
        let sizes = vec![0; centers.rows()];
        assemble_model(centers, prompt_supports, None, sizes, train_index, cfg)
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> ClusterMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn prompt_supports(&self) -> &[Vec<usize>] {
        &self.prompt_supports
    }

    /// Sizes of the k-means clusters at fit time; zeros for a reloaded model.
    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    pub fn center_index(&self) -> &NeighborIndex {
        &self.center_index
    }

    pub fn train_index(&self) -> &NeighborIndex {
        &self.train_index
    }

    pub fn n_train(&self) -> usize {
        self.train_index.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MicpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Index of the nearest center.
    pub fn route(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.center_index.nns(x)?)
    }

    /// Like [`route`](Self::route), also returning the distance evaluations spent.
    pub fn route_counted(&self, x: &[f64]) -> Result<(usize, u64)> {
        self.check_dim(x)?;
        let (r, evals) = self.center_index.knn_counted(x, 1)?;
        Ok((r[0].0, evals))
    }

    /// Prompter for training row `i`: its own cluster under self-routing, otherwise the router.
    pub fn route_train_row(&self, i: usize) -> Result<usize> {
        match (&self.train_assignments, self.self_routing) {
            (Some(a), true) => Ok(a[i]),
            _ => self.route(self.train_index.points().row(i)),
        }
    }

    /// Exact support of `x`: its `min(B, N)` nearest training rows.
    pub fn support_set(&self, x: &[f64]) -> Result<Vec<usize>> {
        let k = self.budget.min(self.n_train());
        Ok(self
            .train_index
            .knn(x, k)?
            .into_iter()
            .map(|p| p.0)
            .collect())
    }

    fn overlap_with(&self, prompter: usize, x: &[f64]) -> Result<usize> {
        let support = &self.prompt_supports[prompter];
        Ok(self
            .support_set(x)?
            .iter()
            .filter(|i| support.binary_search(i).is_ok())
            .count())
    }

    /// `|prompt support of route(x)  ∩  k-NN support of x|`.
    pub fn overlap(&self, x: &[f64]) -> Result<usize> {
        let k = self.route(x)?;
        self.overlap_with(k, x)
    }

    /// Overlap for a training row, honouring self-routing.
    pub fn overlap_train_row(&self, i: usize) -> Result<usize> {
        let k = self.route_train_row(i)?;
        self.overlap_with(k, self.train_index.points().row(i))
    }

    /// Routes every test row and chunks each prompter's queue into batches of
    /// at most `n_batch`, prompters ascending, input order within a prompter.
    pub fn assemble_batches(&self, test: &Matrix, n_batch: usize) -> Result<Vec<PromptPlan>> {
        if n_batch == 0 {
            return Err(MicpError::InvalidConfig("batch size must be positive"));
        }
        if test.rows() > 0 && test.cols() != self.dim() {
            return Err(MicpError::DimensionMismatch {
                expected: self.dim(),
                got: test.cols(),
            });
        }
        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); self.k()];
        for i in 0..test.rows() {
            queues[self.route(test.row(i))?].push(i);
        }
        let mut plans = Vec::new();
        for (k, queue) in queues.into_iter().enumerate() {
            for chunk in queue.chunks(n_batch) {
                plans.push(PromptPlan {
                    context: ContextSource::Prompter(k),
                    query_rows: chunk.to_vec(),
                });
            }
        }
        Ok(plans)
    }

    /// Gathers context and query features for a plan.
    pub fn materialize(
        &self,
        plan: &PromptPlan,
        train: &TabularDataset,
        test: &Matrix,
    ) -> Result<Prompt> {
        materialize(plan, self.prompt_supports(), train, test)
    }
}

/// Gathers a plan's context from `train` (via `supports` for prompter plans) and its queries from `test`.
pub fn materialize(
    plan: &PromptPlan,
    supports: &[Vec<usize>],
    train: &TabularDataset,
    test: &Matrix,
) -> Result<Prompt> {
    let rows: &[usize] = match &plan.context {
        ContextSource::Prompter(k) => supports.get(*k).ok_or(MicpError::InvalidSupport(*k))?,
        ContextSource::Rows(r) => r,
    };
    Prompt::new(
        train.features.select_rows(rows),
        rows.iter().map(|&i| train.labels[i]).collect(),
        test.select_rows(&plan.query_rows),
        plan.query_rows.clone(),
        plan.prompter_id(),
        train.n_classes,
    )
}

/// k-NN prompting baselines drawn straight from a training index.
#[derive(Debug, Clone, Copy)]
pub struct KnnPrompting<'a> {
    pub index: &'a NeighborIndex,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl<'a> KnnPrompting<'a> {
    pub fn new(index: &'a NeighborIndex, labels: &'a [usize], n_classes: usize) -> Self {
        Self {
            index,
            labels,
            n_classes,
        }
    }

    fn gather(&self, rows: &[usize], queries: Matrix, query_rows: Vec<usize>) -> Result<Prompt> {
        Prompt::new(
            self.index.points().select_rows(rows),
            rows.iter().map(|&i| self.labels[i]).collect(),
            queries,
            query_rows,
            None,
            self.n_classes,
        )
    }

    /// Batched variant: the union, in first-retrieval order, of each query's
    /// `floor(B / n_batch)` nearest rows, truncated to `B`.
    pub fn batched(
        &self,
        queries: &Matrix,
        query_rows: Vec<usize>,
        budget: usize,
        n_batch: usize,
    ) -> Result<Prompt> {
        let rows = self.batched_rows(queries, budget, n_batch)?;
        self.gather(&rows, queries.clone(), query_rows)
    }

    /// Context rows of [`batched`](Self::batched).
    pub fn batched_rows(
        &self,
        queries: &Matrix,
        budget: usize,
        n_batch: usize,
    ) -> Result<Vec<usize>> {
        let per = (budget / n_batch.max(1)).clamp(1, self.index.len());
        let mut seen = vec![false; self.index.len()];
        let mut rows = Vec::new();
        for q in queries.iter_rows() {
            for (i, _) in self.index.knn(q, per)? {
                if !seen[i] && rows.len() < budget {
                    seen[i] = true;
                    rows.push(i);
                }
            }
        }
        Ok(rows)
    }

    /// Per-query variant: one prompt whose context is the exact `B`-NN of `x`.
    pub fn single(&self, x: &[f64], query_row: usize, budget: usize) -> Result<Prompt> {
        let rows = self.single_rows(x, budget)?;
        self.gather(&rows, Matrix::from_rows(&[x]), vec![query_row])
    }

    pub fn single_rows(&self, x: &[f64], budget: usize) -> Result<Vec<usize>> {
        let k = budget.min(self.index.len());
        Ok(self.index.knn(x, k)?.into_iter().map(|p| p.0).collect())
    }
}
