//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mixturepfn_core::evalrank::RankMetric;

use crate::commands::{self, CliError, Context};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "mpfn",
    version,
    about = "Mixture-of-prompters in-context tabular classification"
)]
pub struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Base configuration, e.g. a previous run's resolved_config.json.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Impute, encode, clip and standardise; writes the transformed CSVs.
    Preprocess(RunArgs),
    /// Fit the router and prompter supports.
    Fit(RunArgs),
    /// Predict the test CSV and score it.
    Predict(RunArgs),
    /// Finetune the reference predictor's adapters on bootstrap samples.
    Finetune {
        #[command(flatten)]
        run: RunArgs,
        /// Write the `iter,loss` training curve here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Fit and evaluate one model per gamma.
    SweepGamma {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated gamma values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gammas: Option<Vec<f64>>,
    },
    /// Measure prompt/support overlap of training rows in both clustering modes.
    TheoremAudit(RunArgs),
    /// Condorcet, mean-rank and Wilcoxon tables from result records.
    Report {
        /// Records CSV `algorithm,dataset,fold,accuracy,mean_ll,status`; repeatable.
        #[arg(long, required = true)]
        results: Vec<PathBuf>,
        /// Primary ranking metric: accuracy or log-likelihood.
        #[arg(long, default_value = "accuracy")]
        metric: String,
    },
}

/// Run settings; every flag overrides the `--config` base and the preset.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long, alias = "data")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Persisted router from `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Adapter file from `finetune`.
    #[arg(long)]
    pub adapters: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    /// Columns forced categorical.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    #[arg(long)]
    pub max_classes: Option<usize>,
    /// Hyperparameter setting 1..4.
    #[arg(long)]
    pub preset: Option<u8>,
    /// ordinal or frequency.
    #[arg(long)]
    pub encoding: Option<String>,
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Context budget B.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// plain or constrained.
    #[arg(long)]
    pub mode: Option<String>,
    /// Route training rows to their own cluster.
    #[arg(long)]
    pub self_routing: Option<bool>,
    #[arg(long)]
    pub kmeans_iters: Option<usize>,
    #[arg(long)]
    pub n_ensemble: Option<usize>,
    /// Test rows per prompt.
    #[arg(long)]
    pub n_batch: Option<usize>,
    /// micp, knn-batched, knn-single or random.
    #[arg(long)]
    pub context: Option<String>,
    /// reference or external:<command>.
    #[arg(long)]
    pub predictor: Option<String>,
    /// auto, large or small.
    #[arg(long)]
    pub bootstrap: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_queries: Option<usize>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident => $target:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$target = v; })*
    };
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = self.preset {
            cfg.apply_preset(p)?;
        }
        overlay!(cfg, self,
            label => label,
            categorical => categorical,
            encoding => categorical_encoding,
            budget => budget,
            gamma => gamma,
            mode => mode,
            self_routing => self_routing,
            kmeans_iters => kmeans_iters,
            n_ensemble => n_ensemble,
            n_batch => n_batch,
            context => context,
            predictor => predictor,
            bootstrap => bootstrap,
            iterations => iterations,
            learning_rate => learning_rate,
            batch_queries => batch_queries,
        );
        for (flag, target) in [
            (&self.train, &mut cfg.train),
            (&self.test, &mut cfg.test),
            (&self.model, &mut cfg.model),
            (&self.adapters, &mut cfg.adapters),
        ] {
            if flag.is_some() {
                target.clone_from(flag);
            }
        }
        if self.max_classes.is_some() {
            cfg.max_classes = self.max_classes;
        }
        if self.max_features.is_some() {
            cfg.max_features = self.max_features;
        }
        Ok(())
    }
}

fn context(
    cli: &Cli,
    run: Option<&RunArgs>,
    gammas: Option<&Vec<f64>>,
) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(run) = run {
        run.apply(&mut cfg)?;
    }
    if let Some(g) = gammas {
        cfg.gammas.clone_from(g);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Context::new(cfg, cli.out.clone())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Preprocess(a) => commands::preprocess(&context(cli, Some(a), None)?),
        Command::Fit(a) => commands::fit(&context(cli, Some(a), None)?),
        Command::Predict(a) => commands::predict(&context(cli, Some(a), None)?),
        Command::Finetune { run, curve } => {
            commands::finetune(&context(cli, Some(run), None)?, curve.as_deref())
        }
        Command::SweepGamma { run, gammas } => {
            commands::sweep_gamma(&context(cli, Some(run), gammas.as_ref())?)
        }
        Command::TheoremAudit(a) => commands::theorem_audit(&context(cli, Some(a), None)?),
        Command::Report { results, metric } => {
            let metric = RankMetric::parse(metric)
                .ok_or_else(|| CliError::Config(format!("unknown metric {metric:?}")))?;
            commands::report(&context(cli, None, None)?, results, metric)
        }
    }
}
