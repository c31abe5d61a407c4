//! Run configuration: defaults, presets, JSON round-trip and validation.

use std::path::{Path, PathBuf};

use mixturepfn_core::capfn::{BootstrapMode, FinetuneConfig};
use mixturepfn_core::data::{CategoricalEncoding, PreprocessOptions};
use mixturepfn_core::micp::{
    ClusterMode, MicpConfig, DEFAULT_BUDGET, DEFAULT_INFERENCE_BATCH, DEFAULT_KMEANS_ITERS,
};
use mixturepfn_core::neighbors::DEFAULT_LEAF_SIZE;
use mixturepfn_core::optim::AdamConfig;
use mixturepfn_core::predictor::DEFAULT_ENSEMBLE;
use serde::{Deserialize, Serialize};

use crate::bridge::BRIDGE_CMD_ENV;
use crate::pipeline::Strategy;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Everything that determines a run's outputs. Output directory and worker
/// count are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub adapters: Option<PathBuf>,
    pub label: String,
    pub categorical: Vec<String>,
    pub max_classes: Option<usize>,
    pub preset: Option<u8>,
    pub categorical_encoding: String,
    pub max_features: Option<usize>,
    pub budget: usize,
    pub gamma: f64,
    pub mode: String,
    pub self_routing: bool,
    pub kmeans_iters: usize,
    pub leaf_size: usize,
    pub n_ensemble: usize,
    pub n_batch: usize,
    pub context: String,
    pub predictor: String,
    pub seed: u64,
    pub bootstrap: String,
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_queries: usize,
    pub gammas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            model: None,
            adapters: None,
            label: "label".into(),
            categorical: Vec::new(),
            max_classes: None,
            preset: None,
            categorical_encoding: "ordinal".into(),
            max_features: None,
            budget: DEFAULT_BUDGET,
            gamma: 1.0,
            mode: "plain".into(),
            self_routing: false,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            leaf_size: DEFAULT_LEAF_SIZE,
            n_ensemble: DEFAULT_ENSEMBLE,
            n_batch: DEFAULT_INFERENCE_BATCH,
            context: "micp".into(),
            predictor: "reference".into(),
            seed: 0,
            bootstrap: "auto".into(),
            iterations: mixturepfn_core::capfn::DEFAULT_ITERATIONS,
            learning_rate: AdamConfig::default().learning_rate,
            batch_queries: mixturepfn_core::capfn::DEFAULT_BATCH_QUERIES,
            gammas: vec![1.0, 3.0, 5.0],
        }
    }
}

/// Which predictor answers prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    Reference,
    External(String),
}

impl PredictorSpec {
    /// `reference` or `external:<command>`; a set `MPFN_BRIDGE_CMD` replaces the command.
    pub fn parse(s: &str, env_override: Option<String>) -> Option<Self> {
        match s.strip_prefix("external:") {
            Some(cmd) => Some(Self::External(
                env_override.unwrap_or_else(|| cmd.to_string()),
            )),
            None if s == "reference" => Some(Self::Reference),
            None if s == "external" => env_override.map(Self::External),
            None => None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Applies a named hyperparameter setting.
    pub fn apply_preset(&mut self, preset: u8) -> Result<(), ConfigError> {
        let (gamma, max_features, encoding) = match preset {
            1 => (5.0, None, "ordinal"),
            2 => (1.0, None, "ordinal"),
            3 => (1.0, Some(50), "ordinal"),
            4 => (1.0, None, "frequency"),
            _ => return Err(invalid(format!("preset must be 1..4, got {preset}"))),
        };
        self.preset = Some(preset);
        self.gamma = gamma;
        self.max_features = max_features;
        self.categorical_encoding = encoding.into();
        Ok(())
    }

    pub fn cluster_mode(&self) -> Result<ClusterMode, ConfigError> {
        ClusterMode::parse(&self.mode)
            .ok_or_else(|| invalid(format!("unknown mode {:?}", self.mode)))
    }

    pub fn strategy(&self) -> Result<Strategy, ConfigError> {
        Strategy::parse(&self.context)
            .ok_or_else(|| invalid(format!("unknown context {:?}", self.context)))
    }

    pub fn predictor_spec(&self) -> Result<PredictorSpec, ConfigError> {
        let env = std::env::var(BRIDGE_CMD_ENV).ok().filter(|s| !s.is_empty());
        PredictorSpec::parse(&self.predictor, env).ok_or_else(|| {
            invalid(format!(
                "predictor must be reference or external:<command>, got {:?}",
                self.predictor
            ))
        })
    }

    pub fn preprocess_options(&self) -> Result<PreprocessOptions, ConfigError> {
        let categorical_encoding = match self.categorical_encoding.as_str() {
            "ordinal" => CategoricalEncoding::Ordinal,
            "frequency" => CategoricalEncoding::Frequency,
            other => return Err(invalid(format!("unknown categorical encoding {other:?}"))),
        };
        if self.max_features == Some(0) {
            return Err(invalid("max_features must be positive"));
        }
        Ok(PreprocessOptions {
            categorical_encoding,
            max_features: self.max_features,
        })
    }

    pub fn micp_config(&self) -> Result<MicpConfig, ConfigError> {
        Ok(MicpConfig {
            budget: self.budget,
            gamma: self.gamma,
            mode: self.cluster_mode()?,
            seed: self.seed,
            kmeans_iters: self.kmeans_iters,
            self_routing: self.self_routing,
            leaf_size: self.leaf_size,
        })
    }

    pub fn finetune_config(&self) -> Result<FinetuneConfig, ConfigError> {
        let mode = BootstrapMode::parse(&self.bootstrap)
            .ok_or_else(|| invalid(format!("unknown bootstrap mode {:?}", self.bootstrap)))?;
        Ok(FinetuneConfig {
            iterations: self.iterations,
            batch_queries: self.batch_queries,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            budget: self.budget,
            mode,
            seed: self.seed,
        })
    }

    /// Checks every field that commands read.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget == 0 {
            return Err(invalid("budget must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        if self.n_ensemble == 0 {
            return Err(invalid("n_ensemble must be positive"));
        }
        if self.n_batch == 0 {
            return Err(invalid("n_batch must be positive"));
        }
        if self.batch_queries == 0 {
            return Err(invalid("batch_queries must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be non-negative"));
        }
        if self.leaf_size == 0 {
            return Err(invalid("leaf_size must be positive"));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(invalid("every gamma must be positive"));
        }
        self.cluster_mode()?;
        self.strategy()?;
        self.preprocess_options()?;
        self.finetune_config()?;
        self.predictor_spec()?;
        Ok(())
    }
}
