//! End-to-end experiment: features, selection, training, test replay and
//! artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StaticGraph, StreamConfig, StreamState, TemporalEdge};
use crate::datagen::gen_synthetic_shift;
use crate::error::{Result, SplashError};
use crate::features::{self, AugConfig, FeatureTable, Process};
use crate::harness::config::{DataSource, ExperimentConfig, ProcessMode};
use crate::harness::io::{self, DatasetMeta, EdgeFormat};
use crate::harness::split::{chrono_split, ChronoSplit, SplitSizes};
use crate::harness::stream::Deployment;
use crate::metrics::EvalReport;
use crate::nn::{self, Target};
use crate::node2vec;
use crate::rng;
use crate::select::{self, SelectionReport};
use crate::slim::{self, QueryContext, SlimConfig, SlimModel, TrainHistory};
use crate::task::{self, PropertyQuery, PropertySet, TaskKind};

/// Queries captured and predicted together during test replay.
const TEST_CHUNK: usize = 1024;

/// A loaded and split dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub edges: Vec<TemporalEdge>,
    pub props: PropertySet,
    pub meta: DatasetMeta,
    pub split: ChronoSplit,
}

impl Prepared {
    pub fn new(edges: Vec<TemporalEdge>, props: PropertySet, meta: DatasetMeta, fractions: [f64; 3]) -> Result<Self> {
        let split = chrono_split(&props, fractions).map_err(|e| e.in_stage("split"))?;
        Ok(Self { edges, props, meta, split })
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let (edges, props, meta) = match &cfg.data {
            DataSource::File { path, options } => {
                let d = io::load_edge_csv(path, &options.load_options(cfg.task)).map_err(|e| e.in_stage("load"))?;
                (d.edges, d.props, d.meta)
            }
            DataSource::Synthetic(g) => {
                let d = gen_synthetic_shift(g).map_err(|e| e.in_stage("load"))?;
                let meta = DatasetMeta {
                    format: EdgeFormat::Native,
                    d_e: 0,
                    n_nodes: g.n_nodes(),
                    label_dim: g.n_classes,
                    affinity_window: None,
                    items: Vec::new(),
                    item_offset: None,
                };
                (d.edges, d.props, meta)
            }
        };
        if props.task != cfg.task {
            return Err(SplashError::Config("dataset labels do not match the configured task".into()).in_stage("load"));
        }
        Self::new(edges, props, meta, cfg.split)
    }

    /// Endpoints of every edge at or before the end of training.
    pub fn seen_nodes(&self) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .take_while(|e| e.timestamp <= self.split.t_seen)
            .flat_map(|e| [e.src, e.dst])
            .collect()
    }

    pub fn training_snapshot(&self) -> StaticGraph {
        StaticGraph::from_edges(self.edges.iter().take_while(|e| e.timestamp <= self.split.t_seen))
    }
}

/// Seen-node feature tables for one seed.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    pub aug: AugConfig,
    pub seen: BTreeSet<NodeId>,
    pub tables: BTreeMap<Process, FeatureTable>,
}

impl FeatureBundle {
    /// Builds the stored tables needed by `processes`.
    pub fn build(cfg: &ExperimentConfig, data: &Prepared, seed: u64, processes: &[Process]) -> Result<Self> {
        let aug = AugConfig {
            rng_seed: rng::derive(seed ^ cfg.aug.rng_seed, 0x6175_6721),
            ..cfg.aug
        };
        let seen = data.seen_nodes();
        let needed: BTreeSet<Process> = processes
            .iter()
            .flat_map(|p| p.stored_dependencies().iter().copied())
            .collect();
        let mut tables = BTreeMap::new();
        for p in needed {
            let table = match p {
                Process::Random => features::init_random_features(seen.iter().copied(), &aug),
                Process::Positional => {
                    let walk = node2vec::WalkConfig {
                        rng_seed: rng::derive(seed ^ cfg.walk.rng_seed, 0x7761_6c6b),
                        ..cfg.walk
                    };
                    let sg = node2vec::SkipGramConfig {
                        rng_seed: rng::derive(seed ^ cfg.skipgram.rng_seed, 0x736b_6970),
                        ..cfg.skipgram
                    };
                    node2vec::fit_positional(&data.training_snapshot(), &walk, &sg, cfg.parallelism)?
                }
                Process::RandomAll => FeatureTable::random_all(&aug),
                other => unreachable!("{other} has no stored table"),
            };
            tables.insert(p, table);
        }
        Ok(Self { aug, seen, tables })
    }

    pub fn stream_config(&self, d_e: usize, k: usize, t_seen: f64) -> StreamConfig {
        StreamConfig {
            d_e,
            k,
            aug: self.aug,
            t_seen,
        }
    }

    /// Fresh stream state maintaining the tables `process` reads.
    pub fn state_for(&self, processes: &[Process], cfg: StreamConfig) -> Result<StreamState> {
        let deps: BTreeSet<Process> = processes
            .iter()
            .flat_map(|p| p.stored_dependencies().iter().copied())
            .collect();
        let tables = deps
            .iter()
            .map(|p| {
                self.tables
                    .get(p)
                    .cloned()
                    .ok_or_else(|| SplashError::State(format!("{p} features were not built")))
            })
            .collect::<Result<Vec<_>>>()?;
        StreamState::new(cfg, self.seen.iter().copied(), tables)
    }
}

/// Runs automatic selection over the training and validation queries.
pub fn run_selection(cfg: &ExperimentConfig, data: &Prepared, bundle: &FeatureBundle) -> Result<SelectionReport> {
    let available = data.split.available();
    let scfg = bundle.stream_config(data.meta.d_e, cfg.k, data.split.t_seen);
    let mut state = bundle.state_for(&cfg.candidates, scfg)?;
    let encodings = select::encode_queries(&mut state, &data.edges, &available, &cfg.candidates)?;
    let plan = select::make_split_plan(&available, &cfg.selection_fractions)?;
    select::select_process(&encodings, &available, &plan, &cfg.linear, cfg.parallelism)
}

/// Replays the stream once, capturing query contexts on demand.
pub struct ContextStream<'a> {
    state: StreamState,
    edges: &'a [TemporalEdge],
    process: Process,
}

impl<'a> ContextStream<'a> {
    pub fn new(state: StreamState, edges: &'a [TemporalEdge], process: Process) -> Self {
        Self { state, edges, process }
    }

    pub fn capture(&mut self, queries: &[PropertyQuery]) -> Result<Vec<QueryContext>> {
        let process = self.process;
        task::replay(&mut self.state, self.edges, queries, |s, q| {
            slim::capture_context(s, process, q.node, q.time)
        })
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPrediction {
    pub node: NodeId,
    pub time: f64,
    pub label: Target,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: ProcessMode,
    pub process: Process,
    pub skip_weight: f64,
    pub test: EvalReport,
    pub best_val_metric: f64,
    pub best_epoch: usize,
    pub split: SplitSizes,
    pub t_seen: f64,
    pub t_test: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub features_s: f64,
    pub selection_s: f64,
    pub training_s: f64,
    pub test_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: RunTimings,
    pub selection: Option<SelectionReport>,
    pub deployment: Deployment,
    /// Training history per skip weight tried.
    pub histories: Vec<(f64, TrainHistory)>,
    pub predictions: Vec<QueryPrediction>,
}

/// Trains one model per skip weight and keeps the best on validation.
pub fn train_models(
    cfg: &ExperimentConfig,
    data: &Prepared,
    process: Process,
    train_ctx: &[QueryContext],
    val_ctx: &[QueryContext],
    seed: u64,
) -> Result<(SlimModel, Vec<(f64, TrainHistory)>)> {
    let train_targets = data.split.train.targets();
    let val_targets = data.split.val.targets();
    let mut best: Option<(f64, SlimModel)> = None;
    let mut histories = Vec::new();
    for (i, &w) in cfg.skip_weights.iter().enumerate() {
        let slim_cfg = SlimConfig { skip_weight: w, ..cfg.slim };
        let mut model = SlimModel::new(
            slim_cfg,
            process,
            cfg.aug.d_v,
            data.meta.d_e,
            data.props.label_dim,
            rng::derive(seed, 0x6d6f_6400 + i as u64),
        )?;
        let tcfg = slim::TrainConfig {
            rng_seed: rng::derive(seed ^ cfg.train.rng_seed, 0x7472_6e00 + i as u64),
            parallelism: cfg.parallelism,
            ..cfg.train
        };
        let hist = slim::train(&mut model, train_ctx, &train_targets, val_ctx, &val_targets, cfg.task, &tcfg)?;
        log::info!(
            "skip weight {w}: best validation {:.4} at epoch {}",
            hist.best_val_metric,
            hist.best_epoch
        );
        if best.as_ref().is_none_or(|(m, _)| hist.best_val_metric > *m) {
            best = Some((hist.best_val_metric, model));
        }
        histories.push((w, hist));
    }
    let (_, model) = best.expect("at least one skip weight");
    Ok((model, histories))
}

/// Answers every query of `queries` by continuing the replay in chunks.
pub fn predict_queries(stream: &mut ContextStream<'_>, model: &SlimModel, queries: &[PropertyQuery], mode: crate::par::Parallelism) -> Result<Vec<QueryPrediction>> {
    let mut out = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(TEST_CHUNK) {
        let ctx = stream.capture(chunk)?;
        let probs = slim::predict_all(model, &ctx, mode)?;
        out.extend(chunk.iter().zip(probs).map(|(q, probs)| QueryPrediction {
            node: q.node,
            time: q.time,
            label: q.label.clone(),
            probs,
        }));
    }
    Ok(out)
}

/// Processes whose tables a run with `cfg` needs.
fn processes_needed(cfg: &ExperimentConfig) -> Vec<Process> {
    match cfg.process {
        ProcessMode::Auto => cfg.candidates.clone(),
        ProcessMode::Fixed(p) => vec![p],
    }
}

/// One seed of the experiment, without touching the filesystem.
pub fn run_seed(cfg: &ExperimentConfig, data: &Prepared, seed: u64) -> Result<RunOutcome> {
    let mut timings = RunTimings::default();
    let clock = Instant::now();
    let bundle = FeatureBundle::build(cfg, data, seed, &processes_needed(cfg)).map_err(|e| e.in_stage("features"))?;
    timings.features_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (process, selection) = match cfg.process {
        ProcessMode::Fixed(p) => (p, None),
        ProcessMode::Auto => {
            let report = run_selection(cfg, data, &bundle).map_err(|e| e.in_stage("select"))?;
            (report.chosen, Some(report))
        }
    };
    timings.selection_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let scfg = bundle.stream_config(data.meta.d_e, cfg.k, data.split.t_seen);
    let state = bundle.state_for(&[process], scfg.clone()).map_err(|e| e.in_stage("train"))?;
    let mut stream = ContextStream::new(state, &data.edges, process);
    let train_ctx = stream.capture(&data.split.train.queries).map_err(|e| e.in_stage("train"))?;
    let val_ctx = stream.capture(&data.split.val.queries).map_err(|e| e.in_stage("train"))?;
    let (model, histories) =
        train_models(cfg, data, process, &train_ctx, &val_ctx, seed).map_err(|e| e.in_stage("train"))?;
    drop((train_ctx, val_ctx));
    timings.training_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let predictions = predict_queries(&mut stream, &model, &data.split.test.queries, cfg.parallelism)
        .map_err(|e| e.in_stage("test"))?;
    let probs: Vec<Vec<f64>> = predictions.iter().map(|p| p.probs.clone()).collect();
    let test = slim::score(cfg.task, &probs, &data.split.test.targets()).map_err(|e| e.in_stage("test"))?;
    timings.test_s = clock.elapsed().as_secs_f64();
    log::info!("seed {seed}: process {process}, test {} = {:.4}", test.metric, test.value);

    let best_hist = &histories
        .iter()
        .find(|(w, _)| *w == model.cfg.skip_weight)
        .expect("history of the kept model")
        .1;
    let report = RunReport {
        seed,
        mode: cfg.process,
        process,
        skip_weight: model.cfg.skip_weight,
        test,
        best_val_metric: best_hist.best_val_metric,
        best_epoch: best_hist.best_epoch,
        split: data.split.sizes(),
        t_seen: data.split.t_seen,
        t_test: data.split.t_test,
    };
    let deployment = Deployment::from_bundle(model, &bundle, scfg, cfg.task, data.split.t_test, data.meta.clone())?;
    Ok(RunOutcome {
        report,
        timings,
        selection,
        deployment,
        histories,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub task: TaskKind,
    pub metric: String,
    pub mode: ProcessMode,
    pub runs: Vec<RunReport>,
    pub mean: f64,
    pub std: f64,
}

/// Sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every configured seed, writing artifacts under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_json(cfg.output_dir.join("config.json"), cfg)?;
    let data = Prepared::load(cfg)?;
    log::info!(
        "{} edges, {} queries ({} / {} / {})",
        data.edges.len(),
        data.props.len(),
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len()
    );
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.output_dir, seed);
        fs::create_dir_all(&dir)?;
        let outcome = run_seed(cfg, &data, seed)?;
        write_artifacts(&dir, cfg, &outcome).map_err(|e| e.in_stage("persist"))?;
        runs.push(outcome.report);
    }
    let values: Vec<f64> = runs.iter().map(|r| r.test.value).collect();
    let (mean, std) = mean_std(&values);
    let summary = ExperimentSummary {
        task: cfg.task,
        metric: runs[0].test.metric.clone(),
        mode: cfg.process,
        runs,
        mean,
        std,
    };
    write_json(cfg.output_dir.join("metrics.json"), &summary)?;
    Ok(summary)
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub mode: ProcessMode,
    pub chosen: Process,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SelectionReport>,
}

/// `metrics.json`, `selection.json`, `predictions.csv`, `history.csv`,
/// `checkpoint.bin` (+ `features.csv`) and `timings.json`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Result<()> {
    write_json(dir.join("metrics.json"), &outcome.report)?;
    write_json(
        dir.join("selection.json"),
        &SelectionArtifact {
            mode: cfg.process,
            chosen: outcome.report.process,
            report: outcome.selection.clone(),
        },
    )?;
    write_predictions(File::create(dir.join("predictions.csv"))?, &outcome.predictions)?;
    let mut w = csv::Writer::from_writer(File::create(dir.join("history.csv"))?);
    w.write_record(["skip_weight", "epoch", "train_loss", "val_metric"])?;
    for (sw, hist) in &outcome.histories {
        for e in &hist.epochs {
            w.write_record([sw.to_string(), e.epoch.to_string(), e.train_loss.to_string(), e.val_metric.to_string()])?;
        }
    }
    w.flush()?;
    outcome.deployment.save(dir.join("checkpoint.bin"))?;
    write_json(dir.join("timings.json"), &outcome.timings)
}

/// `node,time,label,predicted,p_0,...`; soft labels are written as `-1`.
pub fn write_predictions<W: Write>(out: W, predictions: &[QueryPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = predictions.first().map_or(0, |p| p.probs.len());
    let mut header: Vec<String> = ["node", "time", "label", "predicted"].map(String::from).to_vec();
    header.extend((0..width).map(|i| format!("p_{i}")));
    w.write_record(&header)?;
    for p in predictions {
        let label = match &p.label {
            Target::Class(c) => c.to_string(),
            Target::Soft(_) => "-1".into(),
        };
        let mut rec = vec![p.node.to_string(), p.time.to_string(), label, nn::argmax(&p.probs).to_string()];
        rec.extend(p.probs.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
