//! Context-aware finetuning of the adapter parameters.
//!
//! Each step draws one bootstrap prompt from the training set, either a
//! B-nearest-neighbour neighbourhood of a random row (mirroring what a
//! prompter sees at inference) or a plain 90/10 split, and takes one Adam
//! step on temperature and bias under the prompt's negative log likelihood.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::TabularDataset;
use crate::matrix::Matrix;
use crate::micp::{Prompt, DEFAULT_BUDGET};
use crate::neighbors::NeighborIndex;
use crate::optim::{Adam, AdamConfig};
use crate::predictor::{PredictError, ReferencePredictor};
use crate::rng;

pub const DEFAULT_ITERATIONS: usize = 128;
pub const DEFAULT_BATCH_QUERIES: usize = 64;
pub const SUBTRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FinetuneError {
    #[error("bootstrapping needs at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("invalid finetune config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Neighbor(#[from] crate::neighbors::NeighborError),
}

pub type Result<T, E = FinetuneError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapOrigin {
    LargeKnn,
    SmallSplit,
}

/// Disjoint row-index sets into the training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSample {
    pub subtrain: Vec<usize>,
    pub subtest: Vec<usize>,
    pub origin: BootstrapOrigin,
}

impl BootstrapSample {
    /// Context from `subtrain`, queries from the first `max_queries` of `subtest`.
    pub fn to_batch(&self, train: &TabularDataset, max_queries: usize) -> LabelledPrompt {
        let q = &self.subtest[..self.subtest.len().min(max_queries)];
        let prompt = Prompt {
            context_features: train.features.select_rows(&self.subtrain),
            context_labels: self.subtrain.iter().map(|&i| train.labels[i]).collect(),
            query_features: train.features.select_rows(q),
            query_rows: q.to_vec(),
            prompter_id: None,
            n_classes: train.n_classes,
        };
        LabelledPrompt {
            labels: q.iter().map(|&i| train.labels[i]).collect(),
            prompt,
        }
    }
}

/// A prompt together with the true labels of its queries.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPrompt {
    pub prompt: Prompt,
    pub labels: Vec<usize>,
}

fn split(
    mut rows: Vec<usize>,
    rng: &mut rng::SeededRng,
    origin: BootstrapOrigin,
) -> BootstrapSample {
    rows.shuffle(rng);
    let n = rows.len();
    let n_sub = ((SUBTRAIN_FRACTION * n as f64) as usize).clamp(1, n - 1);
    let subtest = rows.split_off(n_sub);
    BootstrapSample {
        subtrain: rows,
        subtest,
        origin,
    }
}

/// Uniform seed row, its exact `budget`-NN (itself included), split 90/10.
pub fn sample_bootstrap_large(
    index: &NeighborIndex,
    budget: usize,
    seed: u64,
) -> Result<BootstrapSample> {
    let n = index.len();
    if n < 2 {
        return Err(FinetuneError::TooFewRows(n));
    }
    let mut r = rng::seeded(seed);
    let x = r.gen_range(0..n);
    let k = budget.clamp(2, n);
    let rows = index
        .knn(index.points().row(x), k)?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    Ok(split(rows, &mut r, BootstrapOrigin::LargeKnn))
}

/// `floor(0.9 N)` rows without replacement as context, the rest as queries; both sides non-empty.
pub fn sample_bootstrap_small(n_train: usize, seed: u64) -> Result<BootstrapSample> {
    if n_train < 2 {
        return Err(FinetuneError::TooFewRows(n_train));
    }
    let mut r = rng::seeded(seed);
    Ok(split(
        (0..n_train).collect(),
        &mut r,
        BootstrapOrigin::SmallSplit,
    ))
}

/// Per-query log-softmax of the true label, via the class log kernels.
fn log_probs_true(scores: &Matrix, labels: &[usize]) -> Vec<f64> {
    (0..scores.rows())
        .map(|q| {
            let s = scores.row(q);
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + libm::log(s.iter().map(|&v| libm::exp(v - m)).sum::<f64>());
            s[labels[q]] - lse
        })
        .collect()
}

/// Mean negative log likelihood of the true labels.
pub fn nll_loss(pred: &ReferencePredictor, batch: &LabelledPrompt) -> Result<f64> {
    let k = pred.class_log_kernels(&batch.prompt)?;
    let lp = log_probs_true(&pred.scores_from_kernels(&k), &batch.labels);
    let n = lp.len().max(1) as f64;
    Ok(-lp.iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad {
    pub temperature: f64,
    pub bias: Vec<f64>,
}

/// Loss and its gradient with respect to temperature and bias only.
pub fn loss_and_grad(
    pred: &ReferencePredictor,
    batch: &LabelledPrompt,
) -> Result<(f64, AdapterGrad)> {
    let k = pred.class_log_kernels(&batch.prompt)?;
    let scores = pred.scores_from_kernels(&k);
    let lp = log_probs_true(&scores, &batch.labels);
    let n = lp.len().max(1) as f64;
    let probs = crate::predictor::softmax_rows(&scores);
    let c = scores.cols();
    let mut grad = AdapterGrad {
        temperature: 0.0,
        bias: vec![0.0; c],
    };
    for q in 0..scores.rows() {
        for j in 0..c {
            let t = if j == batch.labels[q] { 1.0 } else { 0.0 };
            let ds = (probs.get(q, j) - t) / n;
            grad.temperature += ds * k.get(q, j);
            grad.bias[j] += ds;
        }
    }
    Ok((-lp.iter().sum::<f64>() / n, grad))
}

pub fn grad_adapters(pred: &ReferencePredictor, batch: &LabelledPrompt) -> Result<AdapterGrad> {
    Ok(loss_and_grad(pred, batch)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapMode {
    /// Large when the training set exceeds the context budget.
    Auto,
    Large,
    Small,
}

impl BootstrapMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::Large => "large",
            Self::Small => "small",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "large" => Some(Self::Large),
            "small" => Some(Self::Small),
            _ => None,
        }
    }

    pub fn resolve(self, n_train: usize, budget: usize) -> Self {
        match self {
            Self::Auto if n_train > budget => Self::Large,
            Self::Auto => Self::Small,
            m => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub iterations: usize,
    pub batch_queries: usize,
    pub adam: AdamConfig,
    pub budget: usize,
    pub mode: BootstrapMode,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            batch_queries: DEFAULT_BATCH_QUERIES,
            adam: AdamConfig::default(),
            budget: DEFAULT_BUDGET,
            mode: BootstrapMode::Auto,
            seed: 0,
        }
    }
}

/// Draws bootstrap samples in a fixed seed-determined order.
pub struct BootstrapSampler {
    mode: BootstrapMode,
    budget: usize,
    seed: u64,
    n_train: usize,
    index: Option<NeighborIndex>,
}

impl BootstrapSampler {
    pub fn new(
        train: &TabularDataset,
        mode: BootstrapMode,
        budget: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = train.n_rows();
        if n < 2 {
            return Err(FinetuneError::TooFewRows(n));
        }
        let mode = mode.resolve(n, budget);
        let index = match mode {
            BootstrapMode::Large => Some(NeighborIndex::build(
                train.features.clone(),
                crate::neighbors::DEFAULT_LEAF_SIZE,
            )?),
            _ => None,
        };
        Ok(Self {
            mode,
            budget,
            seed,
            n_train: n,
            index,
        })
    }

    pub fn mode(&self) -> BootstrapMode {
        self.mode
    }

    /// The `t`-th sample of the stream.
    pub fn sample(&self, t: usize) -> Result<BootstrapSample> {
        let s = rng::derive_seed(self.seed, 0xB0_0000 + t as u64);
        match &self.index {
            Some(idx) => sample_bootstrap_large(idx, self.budget, s),
            None => sample_bootstrap_small(self.n_train, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub predictor: ReferencePredictor,
    /// `(iteration, loss before that iteration's step)`.
    pub curve: Vec<(usize, f64)>,
    pub mode: BootstrapMode,
}

/// Fixed-length Adam run on the adapters; bandwidth is carried over untouched.
pub fn finetune(
    pred: &ReferencePredictor,
    train: &TabularDataset,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    if cfg.batch_queries == 0 {
        return Err(FinetuneError::InvalidConfig(
            "batch_queries must be positive",
        ));
    }
    if pred.n_classes() != train.n_classes {
        return Err(FinetuneError::InvalidConfig(
            "predictor and data disagree on class count",
        ));
    }
    let sampler = BootstrapSampler::new(train, cfg.mode, cfg.budget, cfg.seed)?;
    let mut out = pred.clone();
    let mut params: Vec<f64> = core::iter::once(out.temperature)
        .chain(out.bias.iter().copied())
        .collect();
    let mut opt = Adam::new(cfg.adam, params.len());
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut flat = vec![0.0; params.len()];
    for t in 0..cfg.iterations {
        let batch = sampler.sample(t)?.to_batch(train, cfg.batch_queries);
        let (loss, g) = loss_and_grad(&out, &batch)?;
        curve.push((t, loss));
        flat[0] = g.temperature;
        flat[1..].copy_from_slice(&g.bias);
        opt.step(&mut params, &flat);
        out.temperature = params[0];
        out.bias.copy_from_slice(&params[1..]);
    }
    Ok(FinetuneOutcome {
        predictor: out,
        curve,
        mode: sampler.mode(),
    })
}
