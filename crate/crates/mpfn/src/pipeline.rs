//! Prompt scheduling: which training rows each query batch sees, and running
//! the batches through a predictor in a worker pool.

use std::time::{Duration, Instant};

use mixturepfn_core::data::TabularDataset;
use mixturepfn_core::micp::{self, ContextSource, KnnPrompting, MicpError, MicpModel, PromptPlan};
use mixturepfn_core::neighbors::NeighborIndex;
use mixturepfn_core::predictor::{
    ensemble_predict, scatter_rows, InContextPredictor, PredictError, ReferencePredictor,
};
use mixturepfn_core::rng;
use mixturepfn_core::Matrix;
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::bridge::ExternalPredictor;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Micp(#[from] MicpError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// How a query batch obtains its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Routed prompter supports.
    Micp,
    /// Union of per-query neighbours for each batch.
    KnnBatched,
    /// Exact `B`-NN of every query, one query per prompt.
    KnnSingle,
    /// A seeded uniform sample of `B` training rows per batch.
    Random,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "micp" => Some(Self::Micp),
            "knn-batched" => Some(Self::KnnBatched),
            "knn-single" => Some(Self::KnnSingle),
            "random" => Some(Self::Random),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Micp => "micp",
            Self::KnnBatched => "knn-batched",
            Self::KnnSingle => "knn-single",
            Self::Random => "random",
        }
    }
}

/// A query batch whose context rows are resolved only when it runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub query_rows: Vec<usize>,
    pub context: JobContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobContext {
    Prompter(usize),
    KnnBatched,
    KnnSingle,
    Random { seed: u64 },
}

/// Everything needed to turn a [`Job`] into a prompt.
pub struct Schedule<'a> {
    pub train: &'a TabularDataset,
    pub test: &'a Matrix,
    pub budget: usize,
    pub n_batch: usize,
    supports: &'a [Vec<usize>],
    train_index: Option<&'a NeighborIndex>,
}

impl<'a> Schedule<'a> {
    /// Schedule over a fitted router; also serves the KNN strategies via its training index.
    pub fn with_model(
        model: &'a MicpModel,
        train: &'a TabularDataset,
        test: &'a Matrix,
        n_batch: usize,
    ) -> Self {
        Self {
            train,
            test,
            budget: model.budget(),
            n_batch,
            supports: model.prompt_supports(),
            train_index: Some(model.train_index()),
        }
    }

    /// Schedule without a router; `index` is required for the KNN strategies.
    pub fn without_model(
        train: &'a TabularDataset,
        test: &'a Matrix,
        index: Option<&'a NeighborIndex>,
        budget: usize,
        n_batch: usize,
    ) -> Self {
        Self {
            train,
            test,
            budget,
            n_batch,
            supports: &[],
            train_index: index,
        }
    }

    fn chunks(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let n = self.test.rows();
        (0..n)
            .step_by(self.n_batch.max(1))
            .map(move |s| (s..(s + self.n_batch).min(n)).collect())
    }

    /// Lists the jobs for `strategy`; `model` is required for [`Strategy::Micp`].
    pub fn jobs(
        &self,
        strategy: Strategy,
        model: Option<&MicpModel>,
        seed: u64,
    ) -> Result<Vec<Job>, MicpError> {
        if self.n_batch == 0 {
            return Err(MicpError::InvalidConfig("batch size must be positive"));
        }
        Ok(match strategy {
            Strategy::Micp => {
                let model = model.ok_or(MicpError::InvalidConfig(
                    "micp strategy needs a fitted model",
                ))?;
                model
                    .assemble_batches(self.test, self.n_batch)?
                    .into_iter()
                    .map(|p| Job {
                        context: JobContext::Prompter(p.prompter_id().expect("routed plan")),
                        query_rows: p.query_rows,
                    })
                    .collect()
            }
            Strategy::KnnBatched => self
                .chunks()
                .map(|query_rows| Job {
                    query_rows,
                    context: JobContext::KnnBatched,
                })
                .collect(),
            Strategy::KnnSingle => (0..self.test.rows())
                .map(|i| Job {
                    query_rows: vec![i],
                    context: JobContext::KnnSingle,
                })
                .collect(),
            Strategy::Random => self
                .chunks()
                .enumerate()
                .map(|(b, query_rows)| Job {
                    query_rows,
                    context: JobContext::Random {
                        seed: rng::derive_seed(seed, 0x5A_0000 + b as u64),
                    },
                })
                .collect(),
        })
    }

    fn knn(&self) -> Result<KnnPrompting<'a>, MicpError> {
        let index = self.train_index.ok_or(MicpError::InvalidConfig(
            "knn strategies need a training index",
        ))?;
        Ok(KnnPrompting::new(
            index,
            &self.train.labels,
            self.train.n_classes,
        ))
    }

    /// Resolves a job into a concrete plan.
    pub fn plan(&self, job: &Job) -> Result<PromptPlan, MicpError> {
        let context = match job.context {
            JobContext::Prompter(k) => ContextSource::Prompter(k),
            JobContext::KnnBatched => {
                let q = self.test.select_rows(&job.query_rows);
                ContextSource::Rows(self.knn()?.batched_rows(&q, self.budget, self.n_batch)?)
            }
            JobContext::KnnSingle => {
                let i = job.query_rows[0];
                ContextSource::Rows(self.knn()?.single_rows(self.test.row(i), self.budget)?)
            }
            JobContext::Random { seed } => {
                let n = self.train.n_rows();
                let mut r = rng::seeded(seed);
                let mut rows = sample(&mut r, n, self.budget.min(n)).into_vec();
                rows.sort_unstable();
                ContextSource::Rows(rows)
            }
        };
        Ok(PromptPlan {
            context,
            query_rows: job.query_rows.clone(),
        })
    }

    pub fn prompt(&self, job: &Job) -> Result<micp::Prompt, MicpError> {
        micp::materialize(&self.plan(job)?, self.supports, self.train, self.test)
    }
}

/// Where prompts are sent.
pub enum Backend {
    /// Evaluated in the rayon pool; every job gets its own copy.
    Reference(ReferencePredictor),
    /// One process, one request at a time.
    External(Box<ExternalPredictor>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Row `i` holds the prediction for test row `i`.
    pub probs: Matrix,
    /// Context length of each job, in job order.
    pub context_sizes: Vec<usize>,
    /// Forward passes run on this side of the predictor interface.
    pub members_evaluated: usize,
    pub prompt_time: Duration,
}

impl RunOutput {
    pub fn mean_context_size(&self) -> f64 {
        if self.context_sizes.is_empty() {
            return 0.0;
        }
        self.context_sizes.iter().sum::<usize>() as f64 / self.context_sizes.len() as f64
    }

    pub fn mean_prompt_time(&self) -> Duration {
        self.prompt_time / self.context_sizes.len().max(1) as u32
    }
}

struct JobResult {
    probs: Matrix,
    context_len: usize,
    members: usize,
    elapsed: Duration,
}

fn run_one<P: InContextPredictor + ?Sized>(
    pred: &mut P,
    schedule: &Schedule<'_>,
    job: &Job,
    n_ensemble: usize,
    seed: u64,
) -> Result<JobResult, PipelineError> {
    let start = Instant::now();
    let prompt = schedule.prompt(job)?;
    let out = ensemble_predict(pred, &prompt, n_ensemble, seed)?;
    Ok(JobResult {
        probs: out.probs,
        context_len: prompt.context_len(),
        members: out.members_evaluated,
        elapsed: start.elapsed(),
    })
}

/// Runs every job and scatters the rows back into test order. Results do not
/// depend on the pool size.
pub fn run(
    backend: &mut Backend,
    schedule: &Schedule<'_>,
    jobs: &[Job],
    n_ensemble: usize,
    seed: u64,
) -> Result<RunOutput, PipelineError> {
    let results: Vec<JobResult> = match backend {
        Backend::Reference(pred) => {
            let pred = &*pred;
            jobs.par_iter()
                .map(|job| run_one(&mut pred.clone(), schedule, job, n_ensemble, seed))
                .collect::<Result<_, _>>()?
        }
        Backend::External(pred) => jobs
            .iter()
            .map(|job| run_one(pred.as_mut(), schedule, job, n_ensemble, seed))
            .collect::<Result<_, _>>()?,
    };
    let probs = scatter_rows(
        schedule.test.rows(),
        schedule.train.n_classes,
        jobs.iter()
            .zip(&results)
            .map(|(j, r)| (j.query_rows.as_slice(), &r.probs)),
    );
    Ok(RunOutput {
        probs,
        context_sizes: results.iter().map(|r| r.context_len).collect(),
        members_evaluated: results.iter().map(|r| r.members).sum(),
        prompt_time: results.iter().map(|r| r.elapsed).sum(),
    })
}
