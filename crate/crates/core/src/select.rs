//! Automatic choice of the augmentation process by fitting linear probes on
//! several chronological train/validation splits of the labeled queries.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StreamState, TemporalEdge};
use crate::error::{Result, SplashError};
use crate::features::{self, Process};
use crate::nn::{self, AdamConfig, AdamState, Parameterized, Target, TensorMut};
use crate::par::{self, Parallelism};
use crate::task::{self, PropertySet};

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// `[x_i(t) ‖ mean of neighbor snapshots]`; the mean of an empty
/// neighborhood is the zero vector.
pub fn encode_node(state: &StreamState, node: NodeId, t: f64, process: Process) -> Result<Vec<f64>> {
    if t > state.current_time() {
        return Err(SplashError::Contract(format!(
            "encoding at {t} is ahead of the stream ({})",
            state.current_time()
        )));
    }
    let d = process.dim(state.d_v());
    let mut out = features::feature_at(state, process, node)?;
    out.resize(2 * d, 0.0);
    let mut scratch = vec![0.0; d];
    let mut n = 0usize;
    for entry in state.recent_neighbors(node, t) {
        entry.snapshot.write(process, state.aug_config(), &mut scratch)?;
        for (acc, v) in out[d..].iter_mut().zip(&scratch) {
            *acc += v;
        }
        n += 1;
    }
    if n > 0 {
        out[d..].iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(out)
}

/// Encodes every query under each process in a single replay of `edges`.
pub fn encode_queries(
    state: &mut StreamState,
    edges: &[TemporalEdge],
    props: &PropertySet,
    processes: &[Process],
) -> Result<BTreeMap<Process, Array2<f64>>> {
    let rows = task::replay(state, edges, &props.queries, |s, q| {
        processes
            .iter()
            .map(|&p| encode_node(s, q.node, q.time, p))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = BTreeMap::new();
    for (i, &p) in processes.iter().enumerate() {
        let width = 2 * p.dim(state.d_v());
        let mut m = Array2::zeros((rows.len(), width));
        for (r, row) in rows.iter().enumerate() {
            m.row_mut(r).assign(&ArrayView1::from(&row[i][..]));
        }
        out.insert(p, m);
    }
    Ok(out)
}

/// Chronological prefix/suffix splits of the available queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fractions: Vec<f64>,
    pub split_times: Vec<f64>,
    /// Number of training queries per split; the rest validate.
    pub train_sizes: Vec<usize>,
    pub total: usize,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.train_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_sizes.is_empty()
    }

    /// Index ranges `(train, validation)` of split `i`.
    pub fn pair(&self, i: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        (0..self.train_sizes[i], self.train_sizes[i]..self.total)
    }
}

pub fn make_split_plan(props: &PropertySet, fractions: &[f64]) -> Result<SplitPlan> {
    if props.is_empty() {
        return Err(SplashError::Config("no properties to split".into()));
    }
    if fractions.is_empty()
        || fractions.iter().any(|&f| !(f > 0.0 && f < 1.0))
        || fractions.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SplashError::Config(format!(
            "split fractions {fractions:?} must be strictly increasing in (0, 1)"
        )));
    }
    let total = props.len();
    let mut plan = SplitPlan {
        fractions: Vec::new(),
        split_times: Vec::new(),
        train_sizes: Vec::new(),
        total,
    };
    for &f in fractions {
        let n = (f * total as f64).ceil() as usize;
        if n == 0 || n >= total {
            log::warn!("dropping split fraction {f}: {n} of {total} queries would train");
            continue;
        }
        plan.fractions.push(f);
        plan.split_times.push(props.queries[n - 1].time);
        plan.train_sizes.push(n);
    }
    if plan.is_empty() {
        return Err(SplashError::Config("every split fraction produced an empty side".into()));
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub lr: f64,
    pub iterations: usize,
    pub weight_decay: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            iterations: 200,
            weight_decay: 1e-4,
        }
    }
}

/// Softmax regression `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `label_dim × input_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearModel {
    pub fn zeros(label_dim: usize, input_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((label_dim, input_dim)),
            bias: Array1::zeros(label_dim),
        }
    }

    /// `W` with the bias appended as the last column.
    pub fn matrix(&self) -> Array2<f64> {
        let (c, d) = self.weight.dim();
        let mut m = Array2::zeros((c, d + 1));
        m.slice_mut(s![.., ..d]).assign(&self.weight);
        m.column_mut(d).assign(&self.bias);
        m
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

impl Parameterized for LinearModel {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            TensorMut {
                data: self.weight.as_slice_mut().expect("standard layout"),
                decay: true,
            },
            TensorMut {
                data: self.bias.as_slice_mut().expect("standard layout"),
                decay: false,
            },
        ]
    }
}

/// Full-batch Adam from a zero initialization.
pub fn fit_linear(x: ArrayView2<f64>, labels: &[Target], label_dim: usize, cfg: &LinearConfig) -> Result<LinearModel> {
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return Err(SplashError::Shape(format!(
            "{} encodings vs {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let xt = x.t().as_standard_layout().into_owned();
    let mut model = LinearModel::zeros(label_dim, x.ncols());
    let mut opt = AdamState::new(AdamConfig {
        learning_rate: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    for _ in 0..cfg.iterations {
        let (_, dlogits) = nn::batch_cross_entropy(&model.logits(x), labels)?;
        let grad = LinearModel {
            weight: xt.dot(&dlogits).t().as_standard_layout().into_owned(),
            bias: dlogits.sum_axis(Axis(0)),
        };
        opt.step(&mut model, &grad)?;
    }
    Ok(model)
}

/// Mean cross-entropy of the model over a labeled set.
pub fn empirical_risk(model: &LinearModel, x: ArrayView2<f64>, labels: &[Target]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(SplashError::Shape("empirical risk of an empty set".into()));
    }
    Ok(nn::batch_cross_entropy(&model.logits(x), labels)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub plan: SplitPlan,
    /// Validation risk per candidate, one entry per split.
    pub risks: BTreeMap<Process, Vec<f64>>,
    pub summed: BTreeMap<Process, f64>,
    pub chosen: Process,
    /// Latest query time read during selection.
    pub latest_property_time: f64,
}

/// Fits one probe per (split, candidate) and returns the candidate with the
/// lowest summed validation risk. Ties go to the earlier entry of
/// [`Process::SELECTABLE`].
pub fn select_process(
    encodings: &BTreeMap<Process, Array2<f64>>,
    props: &PropertySet,
    plan: &SplitPlan,
    cfg: &LinearConfig,
    mode: Parallelism,
) -> Result<SelectionReport> {
    let candidates: Vec<Process> = Process::SELECTABLE
        .into_iter()
        .filter(|p| encodings.contains_key(p))
        .collect();
    if candidates.is_empty() {
        return Err(SplashError::Selection("no candidate process among R, P, S".into()));
    }
    if let Some(p) = encodings.keys().find(|p| !Process::SELECTABLE.contains(p)) {
        return Err(SplashError::Selection(format!("{p} is not a selectable process")));
    }
    for (p, x) in encodings {
        if x.nrows() != props.len() || plan.total != props.len() {
            return Err(SplashError::Shape(format!("{p} encodings do not cover the property set")));
        }
    }
    let labels = props.targets();
    let jobs: Vec<(Process, usize)> = candidates
        .iter()
        .flat_map(|&p| (0..plan.len()).map(move |i| (p, i)))
        .collect();
    let results = par::map(mode, &jobs, |&(p, i)| -> Result<f64> {
        let x = &encodings[&p];
        let (tr, va) = plan.pair(i);
        let model = fit_linear(x.slice(s![tr.clone(), ..]), &labels[tr], props.label_dim, cfg)?;
        empirical_risk(&model, x.slice(s![va.clone(), ..]), &labels[va])
    });

    let mut risks: BTreeMap<Process, Vec<f64>> = BTreeMap::new();
    for (&(p, _), r) in jobs.iter().zip(results) {
        let r = match r {
            Ok(v) => v,
            Err(SplashError::Divergence { msg, .. }) => {
                log::warn!("probe for {p} diverged: {msg}");
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        risks.entry(p).or_default().push(r);
    }
    let summed: BTreeMap<Process, f64> = risks.iter().map(|(&p, v)| (p, v.iter().sum())).collect();
    let mut chosen: Option<(Process, f64)> = None;
    for &p in &candidates {
        let r = summed[&p];
        if r.is_finite() && chosen.is_none_or(|(_, best)| r < best) {
            chosen = Some((p, r));
        }
    }
    let (chosen, _) = chosen.ok_or_else(|| SplashError::Selection("every candidate risk is non-finite".into()))?;
    log::info!("selected process {chosen} (summed risks {summed:?})");
    Ok(SelectionReport {
        plan: plan.clone(),
        risks,
        summed,
        chosen,
        latest_property_time: props.queries.last().map_or(f64::NEG_INFINITY, |q| q.time),
    })
}
