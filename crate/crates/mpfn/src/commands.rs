//! The seven commands. Each writes deterministic CSV/JSON files into the
//! output directory and appends wall-clock measurements to `timing.log`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mixturepfn_core::capfn::{self, FinetuneError};
use mixturepfn_core::data::{DataError, Preprocessor, TabularDataset};
use mixturepfn_core::evalrank::{self, EvalError, RankMetric, ResultRecord, ResultTable};
use mixturepfn_core::micp::{self, ClusterMode, MicpConfig, MicpError, MicpModel};
use mixturepfn_core::neighbors::NeighborIndex;
use mixturepfn_core::predictor::{PredictError, ReferencePredictor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::ExternalPredictor;
use crate::config::{ConfigError, PredictorSpec, RunConfig, RESOLVED_CONFIG_FILE};
use crate::csvio::{self, LoadError};
use crate::model_file::{self, ModelFileError, StoredModel};
use crate::pipeline::{self, Backend, PipelineError, Schedule, Strategy};

pub const TIMING_LOG: &str = "timing.log";

/// A command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error("predictor failure: {0}")]
    Predictor(String),
    #[error("{0}")]
    Theorem(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(_) => 2,
            CliError::Config(_) => 3,
            CliError::Predictor(_) => 4,
            CliError::Theorem(_) => 5,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError::Predictor(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MicpError> for CliError {
    fn from(e: MicpError) -> Self {
        match e {
            MicpError::DimensionMismatch { .. } | MicpError::InvalidConfig(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Micp(e) => e.into(),
            PipelineError::Predict(e) => e.into(),
        }
    }
}

impl From<FinetuneError> for CliError {
    fn from(e: FinetuneError) -> Self {
        match e {
            FinetuneError::Predict(e) => e.into(),
            FinetuneError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Resolved configuration plus the output directory.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        cfg.validate()?;
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.path(name);
        csvio::write_json(&p, value).map_err(io_err(&p))
    }

    fn write_resolved_config(&self) -> Result<(), CliError> {
        self.write_json(RESOLVED_CONFIG_FILE, &self.cfg)
    }

    fn log_timing(&self, command: &str, phase: &str, seconds: f64) -> Result<(), CliError> {
        let p = self.path(TIMING_LOG);
        std::fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .map_err(io_err(&p))?;
        writeln!(f, "{command}\t{phase}\t{seconds:.6}").map_err(io_err(&p))
    }

    fn train_path(&self) -> Result<&Path, CliError> {
        self.cfg
            .train
            .as_deref()
            .ok_or_else(|| CliError::Config("a training CSV is required (--train)".into()))
    }

    fn test_path(&self) -> Result<&Path, CliError> {
        self.cfg
            .test
            .as_deref()
            .ok_or_else(|| CliError::Config("a test CSV is required (--test)".into()))
    }
}

/// Preprocessed training and optional test split sharing one fitted transform.
pub struct Loaded {
    pub train: TabularDataset,
    pub test: Option<TabularDataset>,
    pub class_names: Vec<String>,
    pub preprocessor: Preprocessor,
}

/// Loads the configured CSVs and fits preprocessing on the training rows only.
pub fn load(cfg: &RunConfig, with_test: bool) -> Result<Loaded, CliError> {
    let train_path = cfg
        .train
        .as_deref()
        .ok_or_else(|| CliError::Config("a training CSV is required (--train)".into()))?;
    let opts = cfg.preprocess_options()?;
    let (raw, n_train) = match (&cfg.test, with_test) {
        (Some(test), true) => csvio::load_pair(
            train_path,
            test,
            &cfg.label,
            &cfg.categorical,
            cfg.max_classes,
        )?,
        _ => {
            let raw = csvio::load_csv(train_path, &cfg.label, &cfg.categorical, cfg.max_classes)?;
            let n = raw.n_rows();
            (raw, n)
        }
    };
    let train_rows: Vec<usize> = (0..n_train).collect();
    let preprocessor = Preprocessor::fit_with(&raw, &train_rows, &opts)?;
    let all = preprocessor.transform(&raw);
    let (train, test) = if n_train == all.n_rows() {
        (all, None)
    } else {
        let test_rows: Vec<usize> = (n_train..all.n_rows()).collect();
        (all.subset(&train_rows), Some(all.subset(&test_rows)))
    };
    Ok(Loaded {
        train,
        test,
        class_names: raw.class_names,
        preprocessor,
    })
}

#[derive(Serialize)]
struct ColumnReport<'a> {
    name: &'a str,
    kind: &'a str,
    mean: f64,
    std: f64,
    clip: Option<(f64, f64)>,
    categories: Option<usize>,
}

#[derive(Serialize)]
struct PreprocessReport<'a> {
    n_train: usize,
    n_test: usize,
    n_features: usize,
    class_names: &'a [String],
    columns: Vec<ColumnReport<'a>>,
}

pub fn preprocess(ctx: &Context) -> Result<(), CliError> {
    ctx.train_path()?;
    let data = load(&ctx.cfg, true)?;
    let p = ctx.path("train.csv");
    csvio::write_dataset(&p, &data.train, &data.class_names).map_err(io_err(&p))?;
    if let Some(test) = &data.test {
        let p = ctx.path("test.csv");
        csvio::write_dataset(&p, test, &data.class_names).map_err(io_err(&p))?;
    }
    let columns = data
        .preprocessor
        .selected
        .iter()
        .zip(&data.train.column_names)
        .map(|(&j, name)| {
            let c = &data.preprocessor.columns[j];
            ColumnReport {
                name,
                kind: c.kind.as_str(),
                mean: c.mean,
                std: c.std,
                clip: c.clip,
                categories: c.categories.as_ref().map(Vec::len),
            }
        })
        .collect();
    ctx.write_json(
        "preprocess_report.json",
        &PreprocessReport {
            n_train: data.train.n_rows(),
            n_test: data.test.as_ref().map_or(0, TabularDataset::n_rows),
            n_features: data.train.n_features(),
            class_names: &data.class_names,
            columns,
        },
    )?;
    ctx.write_resolved_config()
}

#[derive(Serialize)]
struct FitReport {
    k: usize,
    n_train: usize,
    n_features: usize,
    budget: usize,
    gamma: f64,
    mode: &'static str,
    self_routing: bool,
    cluster_sizes: Vec<usize>,
    support_sizes: Vec<usize>,
    /// Distance evaluations spent building prompter supports.
    init_distance_evaluations: u64,
}

fn fit_model(
    ctx: &Context,
    train: &TabularDataset,
    cfg: &MicpConfig,
    command: &str,
) -> Result<MicpModel, CliError> {
    let start = Instant::now();
    let model = micp::fit(&train.features, cfg)?;
    ctx.log_timing(command, "fit_seconds", start.elapsed().as_secs_f64())?;
    Ok(model)
}

pub fn fit(ctx: &Context) -> Result<(), CliError> {
    ctx.train_path()?;
    let data = load(&ctx.cfg, false)?;
    let cfg = ctx.cfg.micp_config()?;
    let model = fit_model(ctx, &data.train, &cfg, "fit")?;
    let stored = StoredModel::from_model(&model, &cfg);
    model_file::save(&ctx.path("model.micp"), &stored)?;
    ctx.write_json(
        "fit_report.json",
        &FitReport {
            k: model.k(),
            n_train: model.n_train(),
            n_features: model.dim(),
            budget: model.budget(),
            gamma: model.gamma(),
            mode: model.mode().as_str(),
            self_routing: cfg.self_routing,
            cluster_sizes: model.cluster_sizes().to_vec(),
            support_sizes: model.prompt_supports().iter().map(Vec::len).collect(),
            init_distance_evaluations: model.train_index().distance_evaluations(),
        },
    )?;
    ctx.write_resolved_config()
}

/// Learned adapter values of the reference predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapters {
    pub bandwidth: f64,
    pub temperature: f64,
    pub bias: Vec<f64>,
}

impl Adapters {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn predictor(&self, n_classes: usize) -> Result<ReferencePredictor, CliError> {
        if self.bias.len() != n_classes {
            return Err(CliError::Config(format!(
                "adapters hold {} biases but the data has {n_classes} classes",
                self.bias.len()
            )));
        }
        let mut p = ReferencePredictor::new(self.bandwidth, n_classes)?;
        p.temperature = self.temperature;
        p.bias.clone_from(&self.bias);
        Ok(p)
    }
}

fn reference_predictor(
    cfg: &RunConfig,
    train: &TabularDataset,
) -> Result<ReferencePredictor, CliError> {
    match &cfg.adapters {
        Some(p) => Adapters::load(p)?.predictor(train.n_classes),
        None => Ok(ReferencePredictor::for_features(
            train.n_features(),
            train.n_classes,
        )),
    }
}

fn backend(cfg: &RunConfig, train: &TabularDataset) -> Result<Backend, CliError> {
    Ok(match cfg.predictor_spec()? {
        PredictorSpec::Reference => Backend::Reference(reference_predictor(cfg, train)?),
        PredictorSpec::External(cmd) => {
            Backend::External(Box::new(ExternalPredictor::spawn(&cmd)?))
        }
    })
}

fn load_model(path: &Path, train: &TabularDataset) -> Result<MicpModel, CliError> {
    let stored = model_file::load(path)?;
    if stored.centers.cols() != train.n_features() {
        return Err(CliError::Config(format!(
            "{}: model expects {} features, data has {}",
            path.display(),
            stored.centers.cols(),
            train.n_features()
        )));
    }
    if stored.sidecar.n_train != train.n_rows() {
        return Err(CliError::Config(format!(
            "{}: model was fitted on {} training rows, data has {}",
            path.display(),
            stored.sidecar.n_train,
            train.n_rows()
        )));
    }
    let cfg = stored
        .config()
        .ok_or_else(|| CliError::Data(format!("{}: unknown clustering mode", path.display())))?;
    Ok(MicpModel::from_parts(
        stored.centers,
        stored.supports,
        &train.features,
        &cfg,
    )?)
}

#[derive(Serialize)]
struct PredictMetrics {
    accuracy: f64,
    mean_log_likelihood: f64,
    n_train: usize,
    n_test: usize,
    context: &'static str,
    k: Option<usize>,
    n_ensemble: usize,
    members_evaluated: usize,
    max_context_size: usize,
    mean_context_size: f64,
}

struct Evaluation {
    run: pipeline::RunOutput,
    metrics: evalrank::Metrics,
}

fn evaluate(
    cfg: &RunConfig,
    backend: &mut Backend,
    model: Option<&MicpModel>,
    train: &TabularDataset,
    test: &TabularDataset,
    strategy: Strategy,
) -> Result<Evaluation, CliError> {
    let index;
    let schedule = match model {
        Some(m) => Schedule::with_model(m, train, &test.features, cfg.n_batch),
        None => {
            index = match strategy {
                Strategy::KnnBatched | Strategy::KnnSingle => Some(
                    NeighborIndex::build(train.features.clone(), cfg.leaf_size)
                        .map_err(MicpError::from)?,
                ),
                _ => None,
            };
            Schedule::without_model(
                train,
                &test.features,
                index.as_ref(),
                cfg.budget,
                cfg.n_batch,
            )
        }
    };
    let jobs = schedule.jobs(strategy, model, cfg.seed)?;
    let run = pipeline::run(backend, &schedule, &jobs, cfg.n_ensemble, cfg.seed)?;
    let metrics = evalrank::metrics(&run.probs, &test.labels)?;
    Ok(Evaluation { run, metrics })
}

fn check_test_dims(train: &TabularDataset, test: &TabularDataset) -> Result<(), CliError> {
    if train.n_features() != test.n_features() {
        return Err(CliError::Config(format!(
            "train has {} features, test has {}",
            train.n_features(),
            test.n_features()
        )));
    }
    Ok(())
}

pub fn predict(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    ctx.train_path()?;
    ctx.test_path()?;
    let data = load(cfg, true)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| CliError::Data("test CSV has no rows".into()))?;
    check_test_dims(&data.train, test)?;
    let strategy = cfg.strategy()?;
    let model = match (&cfg.model, strategy) {
        (Some(p), _) => Some(load_model(p, &data.train)?),
        (None, Strategy::Micp) => {
            Some(fit_model(ctx, &data.train, &cfg.micp_config()?, "predict")?)
        }
        (None, _) => None,
    };
    let mut backend = backend(cfg, &data.train)?;
    let start = Instant::now();
    let eval = evaluate(
        cfg,
        &mut backend,
        model.as_ref(),
        &data.train,
        test,
        strategy,
    )?;
    ctx.log_timing("predict", "predict_seconds", start.elapsed().as_secs_f64())?;
    ctx.log_timing(
        "predict",
        "mean_prompt_seconds",
        eval.run.mean_prompt_time().as_secs_f64(),
    )?;
    if let Backend::External(p) = backend {
        p.shutdown();
    }
    let p = ctx.path("predictions.csv");
    csvio::write_predictions(&p, &eval.run.probs, &data.class_names).map_err(io_err(&p))?;
    ctx.write_json(
        "metrics.json",
        &PredictMetrics {
            accuracy: eval.metrics.accuracy,
            mean_log_likelihood: eval.metrics.mean_log_likelihood,
            n_train: data.train.n_rows(),
            n_test: test.n_rows(),
            context: strategy.as_str(),
            k: model.as_ref().map(MicpModel::k),
            n_ensemble: cfg.n_ensemble,
            members_evaluated: eval.run.members_evaluated,
            max_context_size: eval.run.context_sizes.iter().copied().max().unwrap_or(0),
            mean_context_size: eval.run.mean_context_size(),
        },
    )?;
    ctx.write_resolved_config()
}

#[derive(Serialize)]
struct FinetuneReport<'a> {
    #[serde(flatten)]
    adapters: &'a Adapters,
    bootstrap_mode: &'static str,
    iterations: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

pub fn finetune(ctx: &Context, curve: Option<&Path>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    ctx.train_path()?;
    let data = load(cfg, false)?;
    let start_pred = reference_predictor(cfg, &data.train)?;
    let start = Instant::now();
    let out = capfn::finetune(&start_pred, &data.train, &cfg.finetune_config()?)?;
    ctx.log_timing(
        "finetune",
        "finetune_seconds",
        start.elapsed().as_secs_f64(),
    )?;
    if let Some(path) = curve {
        let mut w = csv::Writer::from_writer(csvio::create(path).map_err(io_err(path))?);
        let mut write = || -> Result<(), csv::Error> {
            w.write_record(["iter", "loss"])?;
            for (t, loss) in &out.curve {
                w.write_record([t.to_string(), csvio::fmt_f64(*loss)])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let adapters = Adapters {
        bandwidth: out.predictor.bandwidth(),
        temperature: out.predictor.temperature,
        bias: out.predictor.bias.clone(),
    };
    ctx.write_json(
        "adapters.json",
        &FinetuneReport {
            adapters: &adapters,
            bootstrap_mode: out.mode.as_str(),
            iterations: out.curve.len(),
            initial_loss: out.curve.first().map(|p| p.1),
            final_loss: out.curve.last().map(|p| p.1),
        },
    )?;
    ctx.write_resolved_config()
}

pub fn sweep_gamma(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    if cfg.gammas.len() < 2 {
        return Err(CliError::Config(
            "sweep-gamma needs at least two gammas".into(),
        ));
    }
    ctx.train_path()?;
    ctx.test_path()?;
    let data = load(cfg, true)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| CliError::Data("test CSV has no rows".into()))?;
    check_test_dims(&data.train, test)?;
    let mut backend = backend(cfg, &data.train)?;
    let p = ctx.path("sweep.csv");
    let mut rows = vec![vec![
        "gamma".to_string(),
        "k".into(),
        "accuracy".into(),
        "mean_ll".into(),
        "mean_prompt_size".into(),
    ]];
    for &gamma in &cfg.gammas {
        let mcfg = MicpConfig {
            gamma,
            ..cfg.micp_config()?
        };
        let model = fit_model(ctx, &data.train, &mcfg, "sweep-gamma")?;
        let eval = evaluate(
            cfg,
            &mut backend,
            Some(&model),
            &data.train,
            test,
            Strategy::Micp,
        )?;
        ctx.log_timing(
            "sweep-gamma",
            &format!("gamma={gamma} mean_prompt_seconds"),
            eval.run.mean_prompt_time().as_secs_f64(),
        )?;
        rows.push(vec![
            csvio::fmt_f64(gamma),
            model.k().to_string(),
            csvio::fmt_f64(eval.metrics.accuracy),
            csvio::fmt_f64(eval.metrics.mean_log_likelihood),
            csvio::fmt_f64(eval.run.mean_context_size()),
        ]);
    }
    if let Backend::External(p) = backend {
        p.shutdown();
    }
    write_rows(&p, &rows)?;
    ctx.write_resolved_config()
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(csvio::create(path).map_err(io_err(path))?);
    for r in rows {
        w.write_record(r)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

/// Overlap statistics of one clustering mode over the training rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapStats {
    pub mode: &'static str,
    pub self_routing: bool,
    pub k: usize,
    pub rows: usize,
    pub nonzero: usize,
    pub fraction: f64,
    pub min_overlap: usize,
    pub mean_overlap: f64,
}

/// Fits `cfg` and measures each training row's overlap with its prompter.
pub fn overlap_stats(train: &TabularDataset, cfg: &MicpConfig) -> Result<OverlapStats, CliError> {
    let model = micp::fit(&train.features, cfg)?;
    let overlaps: Vec<usize> = (0..model.n_train())
        .into_par_iter()
        .map(|i| model.overlap_train_row(i))
        .collect::<Result<_, _>>()?;
    let nonzero = overlaps.iter().filter(|&&o| o > 0).count();
    let n = overlaps.len();
    Ok(OverlapStats {
        mode: cfg.mode.as_str(),
        self_routing: cfg.self_routing,
        k: model.k(),
        rows: n,
        nonzero,
        fraction: nonzero as f64 / n as f64,
        min_overlap: overlaps.iter().copied().min().unwrap_or(0),
        mean_overlap: overlaps.iter().sum::<usize>() as f64 / n as f64,
    })
}

#[derive(Serialize)]
struct AuditReport {
    n_train: usize,
    budget: usize,
    gamma: f64,
    plain: OverlapStats,
    constrained: OverlapStats,
    guarantee_holds: bool,
}

pub fn theorem_audit(ctx: &Context) -> Result<(), CliError> {
    ctx.train_path()?;
    let data = load(&ctx.cfg, false)?;
    let base = ctx.cfg.micp_config()?;
    let plain = overlap_stats(
        &data.train,
        &MicpConfig {
            mode: ClusterMode::Plain,
            self_routing: false,
            ..base.clone()
        },
    )?;
    let constrained = overlap_stats(
        &data.train,
        &MicpConfig {
            mode: ClusterMode::Constrained,
            self_routing: true,
            ..base.clone()
        },
    )?;
    let holds = constrained.nonzero == constrained.rows;
    println!(
        "plain: {}/{} training rows with nonzero overlap ({:.4})",
        plain.nonzero, plain.rows, plain.fraction
    );
    println!(
        "constrained: {}/{} training rows with nonzero overlap ({:.4})",
        constrained.nonzero, constrained.rows, constrained.fraction
    );
    let (violations, rows) = (constrained.rows - constrained.nonzero, constrained.rows);
    ctx.write_json(
        "theorem_audit.json",
        &AuditReport {
            n_train: data.train.n_rows(),
            budget: base.budget,
            gamma: base.gamma,
            plain,
            constrained,
            guarantee_holds: holds,
        },
    )?;
    ctx.write_resolved_config()?;
    if !holds {
        return Err(CliError::Theorem(format!(
            "constrained mode left {violations} of {rows} training rows without overlap"
        )));
    }
    Ok(())
}

/// File contents produced by [`report`], keyed by file name.
pub struct ReportFiles {
    pub condorcet: Vec<Vec<String>>,
    pub pairwise: Vec<Vec<String>>,
    pub mean_rank: Vec<Vec<String>>,
    pub wilcoxon: Vec<Vec<String>>,
    pub winner: Option<String>,
}

/// Builds the tournament tables for a record set.
pub fn report_tables(
    records: &[ResultRecord],
    metric: RankMetric,
) -> Result<ReportFiles, CliError> {
    let table = ResultTable::new(records)?;
    let tally = evalrank::condorcet(records, metric)?;
    let f = csvio::fmt_f64;

    let mut condorcet = vec![vec![
        "algorithm".to_string(),
        "votes".into(),
        "wins".into(),
        "ties".into(),
        "losses".into(),
    ]];
    for i in tally.report_order() {
        let h = tally.head_to_head[i];
        condorcet.push(vec![
            tally.algorithms[i].clone(),
            tally.votes[i].to_string(),
            h.wins.to_string(),
            h.ties.to_string(),
            h.losses.to_string(),
        ]);
    }

    let mut pairwise = vec![vec![
        "algorithm".to_string(),
        "opponent".into(),
        "wins".into(),
        "ties".into(),
        "losses".into(),
    ]];
    for (i, a) in tally.algorithms.iter().enumerate() {
        for (j, b) in tally.algorithms.iter().enumerate() {
            if i != j {
                let c = tally.pairwise[i][j];
                pairwise.push(vec![
                    a.clone(),
                    b.clone(),
                    c.wins.to_string(),
                    c.ties.to_string(),
                    c.losses.to_string(),
                ]);
            }
        }
    }

    let mut mean_rank = vec![vec![
        "algorithm".to_string(),
        "mean".into(),
        "std".into(),
        "median".into(),
        "min".into(),
        "max".into(),
        "datasets".into(),
    ]];
    let subset: Vec<&str> = table.algorithms.iter().map(String::as_str).collect();
    match evalrank::mean_rank_table(records, &subset, metric) {
        Ok(t) => {
            for r in &t.rows {
                mean_rank.push(vec![
                    r.algorithm.clone(),
                    f(r.mean),
                    f(r.std),
                    f(r.median),
                    f(r.min),
                    f(r.max),
                    t.shared_datasets.len().to_string(),
                ]);
            }
        }
        Err(EvalError::NoSharedDatasets) => {}
        Err(e) => return Err(e.into()),
    }

    let mut wilcoxon = vec![vec![
        "algorithm_a".to_string(),
        "algorithm_b".into(),
        "pairs".into(),
        "statistic".into(),
        "p_value".into(),
        "exact".into(),
    ]];
    let value = |m: evalrank::Metrics| match metric {
        RankMetric::Accuracy => m.accuracy,
        RankMetric::LogLikelihood => m.mean_log_likelihood,
    };
    for (i, a) in table.algorithms.iter().enumerate() {
        for b in &table.algorithms[i + 1..] {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for d in table.shared_datasets(&[a, b]) {
                if let (Some(ma), Some(mb)) = (table.get(d, a), table.get(d, b)) {
                    x.push(value(ma));
                    y.push(value(mb));
                }
            }
            let row = match evalrank::wilcoxon_signed_rank(&x, &y) {
                Ok(w) => vec![
                    a.clone(),
                    b.clone(),
                    w.n.to_string(),
                    f(w.statistic),
                    f(w.p_value),
                    w.exact.to_string(),
                ],
                Err(EvalError::TooFewPairs(n)) => {
                    vec![
                        a.clone(),
                        b.clone(),
                        n.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]
                }
                Err(e) => return Err(e.into()),
            };
            wilcoxon.push(row);
        }
    }

    Ok(ReportFiles {
        condorcet,
        pairwise,
        mean_rank,
        wilcoxon,
        winner: tally.winner,
    })
}

pub fn report(ctx: &Context, results: &[PathBuf], metric: RankMetric) -> Result<(), CliError> {
    if results.is_empty() {
        return Err(CliError::Config(
            "report needs at least one --results CSV".into(),
        ));
    }
    let mut records = Vec::new();
    for p in results {
        records.extend(csvio::load_records(p)?);
    }
    let files = report_tables(&records, metric)?;
    write_rows(&ctx.path("condorcet.csv"), &files.condorcet)?;
    write_rows(&ctx.path("pairwise.csv"), &files.pairwise)?;
    write_rows(&ctx.path("mean_rank.csv"), &files.mean_rank)?;
    write_rows(&ctx.path("wilcoxon.csv"), &files.wilcoxon)?;
    match &files.winner {
        Some(w) => println!("Condorcet winner: {w}"),
        None => println!("no Condorcet winner"),
    }
    Ok(())
}
