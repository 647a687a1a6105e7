//! The SLIM temporal model: messages from the k most recent incident edges,
//! mean aggregation with the target's own feature, a layer-normalized skip
//! connection over the message sum, and an MLP decoder.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ctdg::{NeighborEntry, NodeId, StreamState};
use crate::error::{Result, SplashError};
use crate::features::{self, AugConfig, Process};
use crate::metrics::{self, EvalReport};
use crate::nn::{
    self, AdamConfig, AdamState, Dropout, LayerNorm, LayerNormCache, Mlp, MlpCache, NamedTensor,
    Parameterized, Target, TensorMut,
};
use crate::par::{self, Parallelism};
use crate::rng;
use crate::task::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeEncodingConfig {
    pub d_t: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TimeEncodingConfig {
    fn default() -> Self {
        Self {
            d_t: 100,
            alpha: 10.0,
            beta: 10.0,
        }
    }
}

/// `cos(dt * alpha^(-n / beta))` for `n = 0..d_t`.
pub fn time_encode(delta_t: f64, cfg: &TimeEncodingConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.d_t];
    time_encode_into(delta_t, cfg, &mut out);
    out
}

pub fn time_encode_into(delta_t: f64, cfg: &TimeEncodingConfig, out: &mut [f64]) {
    encode_with(delta_t, &cfg.frequencies(), out);
}

fn encode_with(delta_t: f64, freqs: &[f64], out: &mut [f64]) {
    for (slot, f) in out.iter_mut().zip(freqs) {
        *slot = (delta_t * f).cos();
    }
}

impl TimeEncodingConfig {
    /// `alpha^(-n / beta)` for `n = 0..d_t`.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.d_t).map(|n| self.alpha.powf(-(n as f64) / self.beta)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlimConfig {
    /// Hidden width and message dimension.
    pub d_h: usize,
    /// Layers of the message and aggregation MLPs.
    pub mlp_layers: usize,
    pub decoder_layers: usize,
    /// Weight of the layer-normalized message-sum skip branch.
    pub skip_weight: f64,
    pub dropout: f64,
    pub time: TimeEncodingConfig,
}

impl Default for SlimConfig {
    fn default() -> Self {
        Self {
            d_h: 100,
            mlp_layers: 2,
            decoder_layers: 2,
            skip_weight: 1.0,
            dropout: 0.2,
            time: TimeEncodingConfig::default(),
        }
    }
}

impl SlimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.mlp_layers == 0 || self.decoder_layers == 0 {
            return Err(SplashError::Config("model widths and depths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SplashError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.time.d_t == 0 || !(self.time.alpha > 0.0 && self.time.beta > 0.0) {
            return Err(SplashError::Config("time encoding needs d_t >= 1 and alpha, beta > 0".into()));
        }
        Ok(())
    }
}

/// Trainable parameters; also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct SlimParams {
    pub mlp1: Mlp,
    pub mlp2: Mlp,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub decoder: Mlp,
}

impl SlimParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            mlp1: self.mlp1.zeros_like(),
            mlp2: self.mlp2.zeros_like(),
            ln1: self.ln1.zeros_like(),
            ln2: self.ln2.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }
}

impl Parameterized for SlimParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.mlp1.tensors();
        t.extend(self.mlp2.tensors());
        t.extend(self.ln1.tensors());
        t.extend(self.ln2.tensors());
        t.extend(self.decoder.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut t = self.mlp1.tensors_mut();
        t.extend(self.mlp2.tensors_mut());
        t.extend(self.ln1.tensors_mut());
        t.extend(self.ln2.tensors_mut());
        t.extend(self.decoder.tensors_mut());
        t
    }
}

/// Everything a prediction needs about one query, frozen at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub node: NodeId,
    pub time: f64,
    /// Target node's own feature.
    pub own: Vec<f64>,
    /// One row per recent neighbor, oldest first.
    pub neighbor_features: Array2<f64>,
    pub edge_features: Array2<f64>,
    pub deltas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QueryContext {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Reads the target's feature and its recent-neighbor snapshots at `t`.
pub fn capture_context(state: &StreamState, process: Process, node: NodeId, t: f64) -> Result<QueryContext> {
    let d_x = process.dim(state.d_v());
    let entries: Vec<&NeighborEntry> = state.recent_neighbors(node, t).collect();
    let mut neighbor_features = Array2::zeros((entries.len(), d_x));
    let mut edge_features = Array2::zeros((entries.len(), state.d_e()));
    let mut deltas = Vec::with_capacity(entries.len());
    let mut weights = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        e.snapshot.write(
            process,
            state.aug_config(),
            neighbor_features.row_mut(i).as_slice_mut().expect("row-major"),
        )?;
        edge_features
            .row_mut(i)
            .as_slice_mut()
            .expect("row-major")
            .copy_from_slice(&e.edge_feature);
        deltas.push(t - e.timestamp);
        weights.push(e.weight);
    }
    Ok(QueryContext {
        node,
        time: t,
        own: features::feature_at(state, process, node)?,
        neighbor_features,
        edge_features,
        deltas,
        weights,
    })
}

/// `[x_j(t_l) ‖ x_ij ‖ time_encode(t - t_l)]`; the edge block is empty when
/// the stream has no edge features.
pub fn build_raw_message(
    entry: &NeighborEntry,
    t: f64,
    process: Process,
    aug: &AugConfig,
    time: &TimeEncodingConfig,
) -> Result<Vec<f64>> {
    if entry.timestamp > t {
        return Err(SplashError::Contract(format!(
            "edge at {} is in the future of query time {t}",
            entry.timestamp
        )));
    }
    let d_x = process.dim(aug.d_v);
    let d_e = entry.edge_feature.len();
    let mut out = vec![0.0; d_x + d_e + time.d_t];
    entry.snapshot.write(process, aug, &mut out[..d_x])?;
    out[d_x..d_x + d_e].copy_from_slice(&entry.edge_feature);
    time_encode_into(t - entry.timestamp, time, &mut out[d_x + d_e..]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_v: usize,
    /// Node feature width fed to the model (3 d_v for Joint).
    pub d_x: usize,
    pub d_e: usize,
    pub label_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlimModel {
    pub params: SlimParams,
    pub cfg: SlimConfig,
    pub process: Process,
    pub dims: ModelDims,
}

/// Intermediate values of a batched forward pass.
pub struct ForwardCache {
    segments: Vec<Range<usize>>,
    weights: Array1<f64>,
    mlp1: Option<MlpCache>,
    mlp2: MlpCache,
    ln1: LayerNormCache,
    ln2: Option<LayerNormCache>,
    decoder: MlpCache,
    d_x: usize,
}

/// Gradients of a batched backward pass.
pub struct BackwardOutput {
    pub params: SlimParams,
    /// Gradient w.r.t. the raw message rows (all queries stacked).
    pub raw_messages: Array2<f64>,
    /// Gradient w.r.t. each query's own feature.
    pub own: Array2<f64>,
}

/// Stacked inputs of a batch.
pub struct BatchInput {
    pub raw: Array2<f64>,
    pub weights: Array1<f64>,
    pub own: Array2<f64>,
    pub segments: Vec<Range<usize>>,
}

impl SlimModel {
    pub fn new(cfg: SlimConfig, process: Process, d_v: usize, d_e: usize, label_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if label_dim == 0 {
            return Err(SplashError::Config("label dimension must be positive".into()));
        }
        let d_x = process.dim(d_v);
        let mut r = rng::seeded(rng::derive(seed, 0x534c_494d), 0);
        let layers = |input: usize, depth: usize, output: usize| {
            let mut dims = vec![input];
            dims.extend(std::iter::repeat_n(cfg.d_h, depth - 1));
            dims.push(output);
            dims
        };
        let mlp1 = Mlp::new(&layers(d_x + d_e + cfg.time.d_t, cfg.mlp_layers, cfg.d_h), &mut r);
        let mlp2 = Mlp::new(&layers(d_x + cfg.d_h, cfg.mlp_layers, cfg.d_h), &mut r);
        let decoder = Mlp::new(&layers(cfg.d_h, cfg.decoder_layers, label_dim), &mut r);
        Ok(Self {
            params: SlimParams {
                mlp1,
                mlp2,
                ln1: LayerNorm::new(cfg.d_h),
                ln2: LayerNorm::new(cfg.d_h),
                decoder,
            },
            cfg,
            process,
            dims: ModelDims {
                d_v,
                d_x,
                d_e,
                label_dim,
            },
        })
    }

    pub fn raw_message_dim(&self) -> usize {
        self.dims.d_x + self.dims.d_e + self.cfg.time.d_t
    }

    /// Multiply-adds spent answering one query with `n` neighbors.
    pub fn query_cost(&self, n: usize) -> u64 {
        let macs = |m: &Mlp| m.layers.iter().map(|l| (l.fan_in() * l.fan_out()) as u64).sum::<u64>();
        n as u64 * macs(&self.params.mlp1) + macs(&self.params.mlp2) + macs(&self.params.decoder)
    }

    pub fn stack(&self, contexts: &[&QueryContext]) -> Result<BatchInput> {
        let (d_x, d_e) = (self.dims.d_x, self.dims.d_e);
        let rows: usize = contexts.iter().map(|c| c.len()).sum();
        let d_in = self.raw_message_dim();
        let mut raw = Array2::zeros((rows, d_in));
        let mut weights = Array1::zeros(rows);
        let mut own = Array2::zeros((contexts.len(), d_x));
        let mut segments = Vec::with_capacity(contexts.len());
        let freqs = self.cfg.time.frequencies();
        let mut r = 0;
        for (q, ctx) in contexts.iter().enumerate() {
            if ctx.own.len() != d_x || ctx.neighbor_features.ncols() != d_x || ctx.edge_features.ncols() != d_e {
                return Err(SplashError::Shape(format!(
                    "context for node {} does not match model dimensions",
                    ctx.node
                )));
            }
            own.row_mut(q).assign(&ndarray::ArrayView1::from(&ctx.own[..]));
            let start = r;
            for i in 0..ctx.len() {
                let mut row = raw.row_mut(r);
                let row = row.as_slice_mut().expect("row-major");
                let (x, rest) = row.split_at_mut(d_x);
                let (e, enc) = rest.split_at_mut(d_e);
                x.copy_from_slice(ctx.neighbor_features.row(i).as_slice().expect("row-major"));
                e.copy_from_slice(ctx.edge_features.row(i).as_slice().expect("row-major"));
                encode_with(ctx.deltas[i], &freqs, enc);
                weights[r] = ctx.weights[i];
                r += 1;
            }
            segments.push(start..r);
        }
        Ok(BatchInput {
            raw,
            weights,
            own,
            segments,
        })
    }

    /// Batched forward pass returning decoder logits (one row per query).
    /// `dropout_seed = Some(_)` enables training-mode dropout.
    pub fn forward(&self, input: &BatchInput, dropout_seed: Option<u64>) -> Result<(Array2<f64>, ForwardCache)> {
        let p = &self.params;
        let d_h = self.cfg.d_h;
        let nq = input.segments.len();
        let mut drng = dropout_seed.map(|s| rng::seeded(s, 0x6472_6f70));
        let rate = self.cfg.dropout;

        let (messages, mlp1_cache) = if input.raw.nrows() > 0 {
            let (out, cache) = p.mlp1.forward(input.raw.view(), drng.as_mut().map(|rng| Dropout { rate, rng }))?;
            (out * input.weights.view().insert_axis(Axis(1)), Some(cache))
        } else {
            (Array2::zeros((0, d_h)), None)
        };

        let mut z = Array2::zeros((nq, self.dims.d_x + d_h));
        let mut sums = Array2::zeros((nq, d_h));
        z.slice_mut(s![.., ..self.dims.d_x]).assign(&input.own);
        for (q, seg) in input.segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let total = messages.slice(s![seg.clone(), ..]).sum_axis(Axis(0));
            z.slice_mut(s![q, self.dims.d_x..]).assign(&(&total / seg.len() as f64));
            sums.row_mut(q).assign(&total);
        }

        let (h_tilde, mlp2_cache) = p.mlp2.forward(z.view(), drng.as_mut().map(|rng| Dropout { rate, rng }))?;
        let (mut h, ln1_cache) = p.ln1.forward(h_tilde.view())?;
        let ln2_cache = if self.cfg.skip_weight != 0.0 {
            let (skip, cache) = p.ln2.forward(sums.view())?;
            h.scaled_add(self.cfg.skip_weight, &skip);
            Some(cache)
        } else {
            None
        };
        let (logits, dec_cache) = p.decoder.forward(h.view(), drng.as_mut().map(|rng| Dropout { rate, rng }))?;
        Ok((
            logits,
            ForwardCache {
                segments: input.segments.clone(),
                weights: input.weights.clone(),
                mlp1: mlp1_cache,
                mlp2: mlp2_cache,
                ln1: ln1_cache,
                ln2: ln2_cache,
                decoder: dec_cache,
                d_x: self.dims.d_x,
            },
        ))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: ArrayView2<f64>) -> Result<BackwardOutput> {
        let p = &self.params;
        let d_x = cache.d_x;
        let (g_decoder, dh) = p.decoder.backward(&cache.decoder, grad_logits)?;
        let (g_ln1, dh_tilde) = p.ln1.backward(&cache.ln1, dh.view());
        let (g_ln2, dsums) = match &cache.ln2 {
            Some(c) => {
                let (g, d) = p.ln2.backward(c, (&dh * self.cfg.skip_weight).view());
                (g, Some(d))
            }
            None => (p.ln2.zeros_like(), None),
        };
        let (g_mlp2, dz) = p.mlp2.backward(&cache.mlp2, dh_tilde.view())?;
        let d_own = dz.slice(s![.., ..d_x]).to_owned();

        let rows = cache.weights.len();
        let d_h = self.cfg.d_h;
        let mut dmsg = Array2::zeros((rows, d_h));
        for (q, seg) in cache.segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let mut g = &dz.slice(s![q, d_x..]) / seg.len() as f64;
            if let Some(ds) = &dsums {
                g += &ds.row(q);
            }
            for r in seg.clone() {
                dmsg.row_mut(r).assign(&(&g * cache.weights[r]));
            }
        }
        let (g_mlp1, d_raw) = match &cache.mlp1 {
            Some(c) => p.mlp1.backward(c, dmsg.view())?,
            None => (p.mlp1.zeros_like(), Array2::zeros((0, self.raw_message_dim()))),
        };
        Ok(BackwardOutput {
            params: SlimParams {
                mlp1: g_mlp1,
                mlp2: g_mlp2,
                ln1: g_ln1,
                ln2: g_ln2,
                decoder: g_decoder,
            },
            raw_messages: d_raw,
            own: d_own,
        })
    }

    /// Node representations `h` (eval mode), one row per query.
    pub fn representations(&self, contexts: &[&QueryContext]) -> Result<Array2<f64>> {
        let input = self.stack(contexts)?;
        let p = &self.params;
        let mut messages = if input.raw.nrows() > 0 {
            p.mlp1.predict(input.raw.view())?
        } else {
            Array2::zeros((0, self.cfg.d_h))
        };
        messages *= &input.weights.view().insert_axis(Axis(1));
        let nq = contexts.len();
        let mut z = Array2::zeros((nq, self.dims.d_x + self.cfg.d_h));
        let mut sums = Array2::zeros((nq, self.cfg.d_h));
        z.slice_mut(s![.., ..self.dims.d_x]).assign(&input.own);
        for (q, seg) in input.segments.iter().enumerate() {
            if !seg.is_empty() {
                let total = messages.slice(s![seg.clone(), ..]).sum_axis(Axis(0));
                z.slice_mut(s![q, self.dims.d_x..]).assign(&(&total / seg.len() as f64));
                sums.row_mut(q).assign(&total);
            }
        }
        let (mut h, _) = p.ln1.forward(p.mlp2.predict(z.view())?.view())?;
        if self.cfg.skip_weight != 0.0 {
            h.scaled_add(self.cfg.skip_weight, &p.ln2.forward(sums.view())?.0);
        }
        Ok(h)
    }

    /// Probability vector for one query (eval mode).
    pub fn predict_context(&self, ctx: &QueryContext) -> Result<Vec<f64>> {
        let input = self.stack(&[ctx])?;
        let (logits, _) = self.forward(&input, None)?;
        Ok(nn::softmax(logits.row(0).as_slice().expect("row-major")))
    }

    /// Prediction for `node` at `t` from the live stream state.
    pub fn predict(&self, state: &StreamState, node: NodeId, t: f64) -> Result<Vec<f64>> {
        if t > state.current_time() {
            return Err(SplashError::Contract(format!(
                "query time {t} is ahead of the stream ({})",
                state.current_time()
            )));
        }
        self.predict_context(&capture_context(state, self.process, node, t)?)
    }

    /// Mean cross-entropy of a batch and its parameter gradient.
    pub fn loss_and_grad(&self, contexts: &[&QueryContext], targets: &[Target], dropout_seed: Option<u64>) -> Result<(f64, SlimParams)> {
        let input = self.stack(contexts)?;
        let (logits, cache) = self.forward(&input, dropout_seed)?;
        let (loss, dlogits) = nn::batch_cross_entropy(&logits, targets)?;
        Ok((loss, self.backward(&cache, dlogits.view())?.params))
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        let p = &self.params;
        let mut t = p.mlp1.to_named("mlp1");
        t.extend(p.mlp2.to_named("mlp2"));
        t.extend(p.ln1.to_named("ln1"));
        t.extend(p.ln2.to_named("ln2"));
        t.extend(p.decoder.to_named("decoder"));
        t
    }

    /// Checkpoint header describing this model.
    pub fn checkpoint_meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "slim",
            "process": self.process,
            "config": self.cfg,
            "dims": self.dims,
        })
    }

    pub fn from_checkpoint(meta: &serde_json::Value, tensors: &[NamedTensor]) -> Result<Self> {
        if meta.get("model").and_then(|m| m.as_str()) != Some("slim") {
            return Err(SplashError::Format("checkpoint does not hold a SLIM model".into()));
        }
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| SplashError::Format(format!("checkpoint header lacks '{k}'")))
        };
        let cfg: SlimConfig = serde_json::from_value(field("config")?)?;
        let dims: ModelDims = serde_json::from_value(field("dims")?)?;
        let process: Process = serde_json::from_value(field("process")?)?;
        let params = SlimParams {
            mlp1: Mlp::from_named("mlp1", tensors)?,
            mlp2: Mlp::from_named("mlp2", tensors)?,
            ln1: LayerNorm::from_named("ln1", tensors)?,
            ln2: LayerNorm::from_named("ln2", tensors)?,
            decoder: Mlp::from_named("decoder", tensors)?,
        };
        let model = Self { params, cfg, process, dims };
        if model.params.mlp1.input_dim() != model.raw_message_dim()
            || model.params.decoder.output_dim() != dims.label_dim
        {
            return Err(SplashError::Format("checkpoint tensors disagree with its header".into()));
        }
        Ok(model)
    }

    pub fn save<W: std::io::Write>(&self, out: W) -> Result<()> {
        nn::write_checkpoint(out, &self.checkpoint_meta(), &self.to_named())
    }

    pub fn load<R: std::io::Read>(input: R) -> Result<Self> {
        let (meta, tensors) = nn::read_checkpoint(input)?;
        Self::from_checkpoint(&meta, &tensors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub rng_seed: u64,
    /// Queries per parallel work unit inside a batch.
    pub chunk_size: usize,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 600,
            max_epochs: 50,
            patience: 10,
            adam: AdamConfig::default(),
            rng_seed: 0,
            chunk_size: 100,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub stopped_early: bool,
}

/// Probability vectors for many contexts, evaluated per query.
pub fn predict_all(model: &SlimModel, contexts: &[QueryContext], mode: Parallelism) -> Result<Vec<Vec<f64>>> {
    par::map(mode, contexts, |c| model.predict_context(c)).into_iter().collect()
}

/// Scores probability vectors with the task metric.
pub fn score(task: TaskKind, probs: &[Vec<f64>], targets: &[Target]) -> Result<EvalReport> {
    if probs.len() != targets.len() {
        return Err(SplashError::Shape("prediction and label counts differ".into()));
    }
    match task {
        TaskKind::Classification => {
            let n_classes = probs.first().map_or(0, |p| p.len());
            let pred: Vec<usize> = probs.iter().map(|p| nn::argmax(p)).collect();
            let truth: Vec<usize> = targets.iter().map(Target::argmax).collect();
            let f = metrics::f1(&pred, &truth, n_classes)?;
            Ok(EvalReport {
                metric: "micro_f1".into(),
                value: f.micro,
                queries: probs.len(),
                breakdown: [("macro_f1".to_string(), f.macro_)].into(),
            })
        }
        TaskKind::Anomaly => {
            let scores: Vec<f64> = probs.iter().map(|p| p.get(1).copied().unwrap_or(0.0)).collect();
            let labels: Vec<bool> = targets.iter().map(|t| t.argmax() == 1).collect();
            Ok(EvalReport {
                metric: "auc".into(),
                value: metrics::auc(&scores, &labels)?,
                queries: probs.len(),
                breakdown: Default::default(),
            })
        }
        TaskKind::Affinity => {
            let truth: Vec<Vec<f64>> = targets
                .iter()
                .map(|t| match t {
                    Target::Soft(v) => v.clone(),
                    Target::Class(c) => {
                        let mut v = vec![0.0; probs[0].len()];
                        v[*c] = 1.0;
                        v
                    }
                })
                .collect();
            metrics::mean_ndcg(probs, &truth, 10)
        }
    }
}

/// Validation score used for early stopping. Falls back to accuracy when the
/// task metric is undefined on the validation set (e.g. a single class).
fn validation_metric(task: TaskKind, probs: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    match score(task, probs, targets) {
        Ok(r) => Ok(r.value),
        Err(SplashError::UndefinedMetric(msg)) => {
            log::warn!("validation {} undefined ({msg}); using accuracy", task.metric_name());
            let hits = probs
                .iter()
                .zip(targets)
                .filter(|(p, t)| nn::argmax(p) == t.argmax())
                .count();
            Ok(hits as f64 / probs.len().max(1) as f64)
        }
        Err(e) => Err(e),
    }
}

/// Minibatch training with metric-based early stopping; the best-validation
/// parameters are restored before returning.
pub fn train(
    model: &mut SlimModel,
    train_set: &[QueryContext],
    train_targets: &[Target],
    val_set: &[QueryContext],
    val_targets: &[Target],
    task: TaskKind,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if train_set.is_empty() || train_set.len() != train_targets.len() || val_set.len() != val_targets.len() {
        return Err(SplashError::Config("training needs matching, non-empty context and label sets".into()));
    }
    if cfg.batch_size == 0 || cfg.chunk_size == 0 {
        return Err(SplashError::Config("batch and chunk sizes must be positive".into()));
    }
    let mut opt = AdamState::new(cfg.adam);
    let mut history = TrainHistory {
        best_val_metric: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = model.params.clone();
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let mut shuffle_rng = rng::seeded(rng::derive(cfg.rng_seed, epoch as u64), 0x7368_7566);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let chunks: Vec<&[usize]> = batch.chunks(cfg.chunk_size).collect();
            let batch_len = batch.len() as f64;
            let model_ref = &*model;
            let results = par::map_range(cfg.parallelism, chunks.len(), |c| {
                let idx = chunks[c];
                let ctxs: Vec<&QueryContext> = idx.iter().map(|&i| &train_set[i]).collect();
                let tgts: Vec<Target> = idx.iter().map(|&i| train_targets[i].clone()).collect();
                let seed = rng::derive(cfg.rng_seed, ((epoch as u64) << 40) | ((b as u64) << 20) | c as u64);
                model_ref.loss_and_grad(&ctxs, &tgts, Some(seed)).map(|(l, mut g)| {
                    // chunk mean -> share of the batch mean
                    let w = idx.len() as f64 / batch_len;
                    g.scale(w);
                    (l * idx.len() as f64, g)
                })
            });
            let mut grads: Option<SlimParams> = None;
            for r in results {
                let (l, g) = r?;
                loss_sum += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.accumulate(&g),
                }
            }
            let grads = grads.expect("non-empty batch");
            opt.step(&mut model.params, &grads).map_err(|e| match e {
                SplashError::Divergence { msg, .. } => SplashError::Divergence { epoch, msg },
                other => other,
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(SplashError::Divergence {
                epoch,
                msg: format!("training loss is {train_loss}"),
            });
        }
        let val_metric = if val_set.is_empty() {
            -train_loss
        } else {
            let probs = predict_all(model, val_set, cfg.parallelism)?;
            validation_metric(task, &probs, val_targets)?
        };
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, validation {val_metric:.5}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_metric,
        });
        if val_metric > history.best_val_metric {
            history.best_val_metric = val_metric;
            history.best_epoch = epoch;
            best = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params = best;
    Ok(history)
}
