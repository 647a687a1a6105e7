//! Serving: a trained model plus the stream state it needs, answering
//! interleaved edge and query events.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StreamConfig, StreamState};
use crate::error::{Result, SplashError};
use crate::features::{self, FeatureTable, Process};
use crate::harness::io::{DatasetMeta, Event};
use crate::harness::pipeline::{predict_queries, ContextStream, FeatureBundle, QueryPrediction};
use crate::harness::io::Dataset;
use crate::metrics::EvalReport;
use crate::nn;
use crate::par::Parallelism;
use crate::slim::{self, SlimModel};
use crate::task::TaskKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeploymentMeta {
    stream: StreamConfig,
    seen_nodes: Vec<NodeId>,
    task: TaskKind,
    t_test: f64,
    dataset: DatasetMeta,
    features_file: Option<String>,
}

/// Everything needed to replay a stream and answer queries.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub model: SlimModel,
    pub stream: StreamConfig,
    pub seen: Vec<NodeId>,
    /// Stored tables read by the model's process (seen values only).
    pub tables: Vec<FeatureTable>,
    pub task: TaskKind,
    pub t_test: f64,
    pub dataset: DatasetMeta,
}

impl Deployment {
    pub fn from_bundle(
        model: SlimModel,
        bundle: &FeatureBundle,
        stream: StreamConfig,
        task: TaskKind,
        t_test: f64,
        dataset: DatasetMeta,
    ) -> Result<Self> {
        let tables = model
            .process
            .stored_dependencies()
            .iter()
            .map(|p| {
                bundle
                    .tables
                    .get(p)
                    .cloned()
                    .ok_or_else(|| SplashError::State(format!("{p} features were not built")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            stream,
            seen: bundle.seen.iter().copied().collect(),
            tables,
            task,
            t_test,
            dataset,
        })
    }

    pub fn new_state(&self) -> Result<StreamState> {
        StreamState::new(self.stream.clone(), self.seen.iter().copied(), self.tables.iter().cloned())
    }

    /// Writes the checkpoint and, when the model reads stored features, a
    /// `<name>.features.csv` sidecar next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let stored: Vec<&FeatureTable> = self.tables.iter().filter(|t| t.process() != Process::RandomAll).collect();
        let features_file = if stored.is_empty() {
            None
        } else {
            let name = format!(
                "{}.features.csv",
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint")
            );
            let mut out = BufWriter::new(File::create(path.with_file_name(&name))?);
            for (i, t) in stored.iter().enumerate() {
                t.write_csv(&mut out, i == 0)?;
            }
            out.flush()?;
            Some(name)
        };
        let mut meta = self.model.checkpoint_meta();
        meta["deployment"] = serde_json::to_value(DeploymentMeta {
            stream: self.stream.clone(),
            seen_nodes: self.seen.clone(),
            task: self.task,
            t_test: self.t_test,
            dataset: self.dataset.clone(),
            features_file,
        })?;
        let mut out = BufWriter::new(File::create(path)?);
        nn::write_checkpoint(&mut out, &meta, &self.model.to_named())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (meta, tensors) = nn::read_checkpoint(BufReader::new(File::open(path)?))?;
        let model = SlimModel::from_checkpoint(&meta, &tensors)?;
        let dm: DeploymentMeta = serde_json::from_value(
            meta.get("deployment")
                .cloned()
                .ok_or_else(|| SplashError::Format("checkpoint has no deployment header".into()))?,
        )?;
        let mut stored = match &dm.features_file {
            Some(name) => features::read_feature_csv(BufReader::new(File::open(path.with_file_name(name))?))?,
            None => Default::default(),
        };
        let mut tables = Vec::new();
        for &p in model.process.stored_dependencies() {
            let table = match p {
                Process::RandomAll => FeatureTable::random_all(&dm.stream.aug),
                _ => stored
                    .remove(&p)
                    .ok_or_else(|| SplashError::Format(format!("feature sidecar lacks {p} values")))?,
            };
            tables.push(table);
        }
        Ok(Self {
            model,
            stream: dm.stream,
            seen: dm.seen_nodes,
            tables,
            task: dm.task,
            t_test: dm.t_test,
            dataset: dm.dataset,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPrediction {
    pub node: NodeId,
    pub time: f64,
    pub label: Option<usize>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub edges: u64,
    pub queries: u64,
    pub seconds: f64,
}

/// Processes events in order; every query is answered from the state built
/// by the events before it.
pub fn stream_predict<I, F>(dep: &Deployment, events: I, mut sink: F) -> Result<StreamStats>
where
    I: IntoIterator<Item = Result<Event>>,
    F: FnMut(StreamPrediction) -> Result<()>,
{
    let clock = Instant::now();
    let mut state = dep.new_state()?;
    let mut stats = StreamStats::default();
    for ev in events {
        match ev? {
            Event::Edge(e) => {
                state.ingest_edge(&e)?;
                stats.edges += 1;
            }
            Event::Query { node, time, label } => {
                state.advance_to(time)?;
                let probs = dep.model.predict(&state, node, time)?;
                stats.queries += 1;
                sink(StreamPrediction { node, time, label, probs })?;
            }
        }
    }
    stats.seconds = clock.elapsed().as_secs_f64();
    Ok(stats)
}

/// `node,time,label,predicted,p_0,...`.
pub struct PredictionWriter<W: Write> {
    inner: csv::Writer<W>,
    header_written: bool,
}

impl<W: Write> PredictionWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
            header_written: false,
        }
    }

    pub fn write(&mut self, p: &StreamPrediction) -> Result<()> {
        if !self.header_written {
            let mut header: Vec<String> = ["node", "time", "label", "predicted"].map(String::from).to_vec();
            header.extend((0..p.probs.len()).map(|i| format!("p_{i}")));
            self.inner.write_record(&header)?;
            self.header_written = true;
        }
        let mut rec = vec![
            p.node.to_string(),
            p.time.to_string(),
            p.label.map_or("-1".into(), |l| l.to_string()),
            nn::argmax(&p.probs).to_string(),
        ];
        rec.extend(p.probs.iter().map(|v| v.to_string()));
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Replays a labeled dataset and scores queries after the training and
/// validation periods (or all of them).
pub fn evaluate_dataset(
    dep: &Deployment,
    data: &Dataset,
    all_queries: bool,
    mode: Parallelism,
) -> Result<(EvalReport, Vec<QueryPrediction>)> {
    if data.meta.d_e != dep.stream.d_e || data.props.label_dim != dep.model.dims.label_dim {
        return Err(SplashError::Shape(format!(
            "dataset (d_e {}, {} labels) does not match the checkpoint (d_e {}, {} labels)",
            data.meta.d_e, data.props.label_dim, dep.stream.d_e, dep.model.dims.label_dim
        )));
    }
    let queries: Vec<_> = data
        .props
        .queries
        .iter()
        .filter(|q| all_queries || q.time > dep.t_test)
        .cloned()
        .collect();
    if queries.is_empty() {
        return Err(SplashError::Config("no queries to evaluate".into()));
    }
    let mut stream = ContextStream::new(dep.new_state()?, &data.edges, dep.model.process);
    let preds = predict_queries(&mut stream, &dep.model, &queries, mode)?;
    let probs: Vec<Vec<f64>> = preds.iter().map(|p| p.probs.clone()).collect();
    let targets: Vec<_> = queries.iter().map(|q| q.label.clone()).collect();
    Ok((slim::score(dep.task, &probs, &targets)?, preds))
}
