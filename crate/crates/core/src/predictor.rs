//! In-context predictors.
//!
//! [`ReferencePredictor`] is a differentiable stand-in for a prior-fitted
//! network: per-class log kernel mass, scaled by a temperature and shifted by
//! a per-class bias, then a softmax. The bandwidth is frozen; temperature and
//! bias are the adapter parameters that finetuning may move.
//!
//! [`ensemble_predict`] implements the feature-shuffle / power-scale
//! ensemble over any [`InContextPredictor`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::matrix::{sq_euclidean, Matrix};
use crate::micp::Prompt;
use crate::rng;

/// Floor added to each class's kernel mass so empty classes stay finite.
pub const EMPTY_CLASS_FLOOR: f64 = 1e-12;
pub const DEFAULT_ENSEMBLE: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("prompt has an empty context")]
    EmptyContext,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prompt exceeds predictor capabilities: {0}")]
    CapabilityExceeded(String),
    #[error("ensemble size {0} must be 1 or an even number")]
    InvalidEnsemble(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("external predictor unavailable: {0}")]
    BridgeUnavailable(String),
    #[error("external predictor protocol violation: {0}")]
    ProtocolViolation(String),
}

pub type Result<T, E = PredictError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Reference,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub max_context: usize,
    pub max_features: usize,
    pub max_classes: usize,
    /// The predictor ensembles natively given `n_ensemble`.
    pub supports_ensembling: bool,
}

impl Capabilities {
    pub const UNBOUNDED: Self = Self {
        max_context: usize::MAX,
        max_features: usize::MAX,
        max_classes: usize::MAX,
        supports_ensembling: false,
    };

    /// Rejects prompts outside the envelope before anything is dispatched.
    pub fn check(&self, prompt: &Prompt) -> Result<()> {
        if prompt.context_len() > self.max_context {
            return Err(PredictError::CapabilityExceeded(alloc::format!(
                "context of {} rows exceeds {}",
                prompt.context_len(),
                self.max_context
            )));
        }
        if prompt.query_features.cols() > self.max_features {
            return Err(PredictError::CapabilityExceeded(alloc::format!(
                "{} features exceed {}",
                prompt.query_features.cols(),
                self.max_features
            )));
        }
        if prompt.n_classes > self.max_classes {
            return Err(PredictError::CapabilityExceeded(alloc::format!(
                "{} classes exceed {}",
                prompt.n_classes,
                self.max_classes
            )));
        }
        Ok(())
    }
}

/// Anything that maps a prompt to one probability row per query.
pub trait InContextPredictor {
    fn kind(&self) -> PredictorKind;

    fn capabilities(&self) -> Capabilities;

    /// Single forward pass on the prompt as given.
    fn predict(&mut self, prompt: &Prompt) -> Result<Matrix>;

    /// Native ensembling; only called when `capabilities().supports_ensembling`.
    fn predict_ensembled(
        &mut self,
        prompt: &Prompt,
        _n_ensemble: usize,
        _seed: u64,
    ) -> Result<Matrix> {
        self.predict(prompt)
    }
}

/// Frozen bandwidth plus trainable temperature and per-class bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePredictor {
    bandwidth: f64,
    pub temperature: f64,
    pub bias: Vec<f64>,
}

fn check_prompt(prompt: &Prompt) -> Result<()> {
    if prompt.context_len() == 0 {
        return Err(PredictError::EmptyContext);
    }
    let d = prompt.context_features.cols();
    if prompt.n_queries() > 0 && prompt.query_features.cols() != d {
        return Err(PredictError::DimensionMismatch {
            expected: d,
            got: prompt.query_features.cols(),
        });
    }
    Ok(())
}

/// `log(floor + sum(exp(z)))` without underflow.
fn log_floor_sum_exp(zs: &[f64], floor_log: f64) -> f64 {
    let m = zs.iter().copied().fold(floor_log, f64::max);
    let mut s = libm::exp(floor_log - m);
    for &z in zs {
        s += libm::exp(z - m);
    }
    m + libm::log(s)
}

/// Row-wise softmax, renormalised.
pub fn softmax_rows(scores: &Matrix) -> Matrix {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - m);
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

impl ReferencePredictor {
    /// Temperature 1 and zero bias, so the adapters start as the identity.
    pub fn new(bandwidth: f64, n_classes: usize) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(PredictError::InvalidParameter("bandwidth must be positive"));
        }
        Ok(Self {
            bandwidth,
            temperature: 1.0,
            bias: vec![0.0; n_classes],
        })
    }

    /// Default bandwidth `sqrt(d)`.
    pub fn for_features(n_features: usize, n_classes: usize) -> Self {
        Self::new(libm::sqrt(n_features.max(1) as f64), n_classes).expect("positive bandwidth")
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    /// Per query and class, `log(floor + sum_i exp(-|x - x_i|^2 / 2h^2))` over that class's context rows.
    pub fn class_log_kernels(&self, prompt: &Prompt) -> Result<Matrix> {
        check_prompt(prompt)?;
        let c = prompt.n_classes.max(self.n_classes());
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let floor_log = libm::log(EMPTY_CLASS_FLOOR);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &y) in prompt.context_labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let mut out = Matrix::zeros(prompt.n_queries(), c);
        let mut zs = Vec::new();
        for q in 0..prompt.n_queries() {
            let x = prompt.query_features.row(q);
            for (class, rows) in by_class.iter().enumerate() {
                zs.clear();
                zs.extend(
                    rows.iter()
                        .map(|&i| -sq_euclidean(x, prompt.context_features.row(i)) * inv),
                );
                out.set(q, class, log_floor_sum_exp(&zs, floor_log));
            }
        }
        Ok(out)
    }

    /// Class scores `temperature * log_kernel + bias`.
    pub fn scores_from_kernels(&self, kernels: &Matrix) -> Matrix {
        let mut s = kernels.clone();
        for i in 0..s.rows() {
            for (j, v) in s.row_mut(i).iter_mut().enumerate() {
                *v = self.temperature * *v + self.bias.get(j).copied().unwrap_or(0.0);
            }
        }
        s
    }

    pub fn predict_proba(&self, prompt: &Prompt) -> Result<Matrix> {
        let k = self.class_log_kernels(prompt)?;
        Ok(softmax_rows(&self.scores_from_kernels(&k)))
    }
}

impl InContextPredictor for ReferencePredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Reference
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::UNBOUNDED
    }

    fn predict(&mut self, prompt: &Prompt) -> Result<Matrix> {
        self.predict_proba(prompt)
    }
}

/// Signed square root, the power-law scaling applied to half the ensemble.
#[inline]
pub fn signed_sqrt(x: f64) -> f64 {
    libm::copysign(libm::sqrt(libm::fabs(x)), x)
}

/// One ensemble member: a feature permutation, optionally power scaled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberTransform {
    pub permutation: Vec<usize>,
    pub power_scaled: bool,
}

impl MemberTransform {
    pub fn apply(&self, prompt: &Prompt) -> Prompt {
        let f = |m: &Matrix| {
            let p = m.permute_columns(&self.permutation);
            if self.power_scaled {
                p.map(signed_sqrt)
            } else {
                p
            }
        };
        Prompt {
            context_features: f(&prompt.context_features),
            context_labels: prompt.context_labels.clone(),
            query_features: f(&prompt.query_features),
            query_rows: prompt.query_rows.clone(),
            prompter_id: prompt.prompter_id,
            n_classes: prompt.n_classes,
        }
    }
}

/// The `n_ensemble` members for `d` features: `n_ensemble / 2` seeded
/// permutations (the first is the identity), each raw then power scaled.
pub fn ensemble_members(d: usize, n_ensemble: usize, seed: u64) -> Result<Vec<MemberTransform>> {
    if n_ensemble == 0 || (n_ensemble > 1 && !n_ensemble.is_multiple_of(2)) {
        return Err(PredictError::InvalidEnsemble(n_ensemble));
    }
    let identity: Vec<usize> = (0..d).collect();
    if n_ensemble == 1 {
        return Ok(vec![MemberTransform {
            permutation: identity,
            power_scaled: false,
        }]);
    }
    let mut rng = rng::derive(seed, 0xE5);
    let mut perms: Vec<Vec<usize>> = vec![identity.clone()];
    while perms.len() < n_ensemble / 2 {
        let mut p = identity.clone();
        // retry a few times for a permutation not yet used; small d may run out
        for _ in 0..16 {
            p.shuffle(&mut rng);
            if !perms.contains(&p) {
                break;
            }
        }
        perms.push(p);
    }
    Ok(perms
        .into_iter()
        .flat_map(|p| {
            [false, true].map(|power_scaled| MemberTransform {
                permutation: p.clone(),
                power_scaled,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub probs: Matrix,
    /// Forward passes actually run on this side of the interface.
    pub members_evaluated: usize,
}

/// Averages member probabilities in member order. `n_ensemble == 1` is a plain forward pass.
pub fn ensemble_predict<P: InContextPredictor + ?Sized>(
    predictor: &mut P,
    prompt: &Prompt,
    n_ensemble: usize,
    seed: u64,
) -> Result<EnsemblePrediction> {
    let caps = predictor.capabilities();
    caps.check(prompt)?;
    let members = ensemble_members(prompt.query_features.cols(), n_ensemble, seed)?;
    if n_ensemble == 1 {
        return Ok(EnsemblePrediction {
            probs: predictor.predict(prompt)?,
            members_evaluated: 1,
        });
    }
    if caps.supports_ensembling {
        return Ok(EnsemblePrediction {
            probs: predictor.predict_ensembled(prompt, n_ensemble, seed)?,
            members_evaluated: 1,
        });
    }
    let mut acc: Option<Matrix> = None;
    for m in &members {
        let p = predictor.predict(&m.apply(prompt))?;
        acc = Some(match acc {
            None => p,
            Some(mut a) => {
                for i in 0..a.rows() {
                    for (x, y) in a.row_mut(i).iter_mut().zip(p.row(i)) {
                        *x += y;
                    }
                }
                a
            }
        });
    }
    let n = members.len() as f64;
    Ok(EnsemblePrediction {
        probs: acc.expect("at least one member").map(|v| v / n),
        members_evaluated: members.len(),
    })
}

/// Row-sum slack within which externally produced rows are renormalised.
pub const EXTERNAL_SUM_TOLERANCE: f64 = 1e-3;

/// Checks shape, finiteness and normalisation of rows returned by an external
/// predictor, renormalising rows whose sum is within tolerance of 1.
pub fn validate_external_rows(
    rows: Vec<Vec<f64>>,
    n_queries: usize,
    n_classes: usize,
) -> Result<Matrix> {
    if rows.len() != n_queries {
        return Err(PredictError::ProtocolViolation(alloc::format!(
            "expected {n_queries} rows, got {}",
            rows.len()
        )));
    }
    let mut out = Matrix::zeros(n_queries, n_classes);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n_classes {
            return Err(PredictError::ProtocolViolation(alloc::format!(
                "row {i} has {} entries, expected {n_classes}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PredictError::ProtocolViolation(alloc::format!(
                "row {i} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > EXTERNAL_SUM_TOLERANCE {
            return Err(PredictError::ProtocolViolation(alloc::format!(
                "row {i} sums to {s}"
            )));
        }
        for (dst, v) in out.row_mut(i).iter_mut().zip(row) {
            *dst = v / s;
        }
    }
    Ok(out)
}

/// Writes each part's rows back to their original positions.
pub fn scatter_rows<'a>(
    n_rows: usize,
    n_classes: usize,
    parts: impl IntoIterator<Item = (&'a [usize], &'a Matrix)>,
) -> Matrix {
    let mut out = Matrix::zeros(n_rows, n_classes);
    for (rows, probs) in parts {
        for (r, &dst) in rows.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(probs.row(r));
        }
    }
    out
}
