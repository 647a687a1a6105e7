//! Node feature augmentation: random (R), positional (P) and structural (S)
//! processes for seen nodes, and running-mean propagation for unseen nodes.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StreamState};
use crate::error::{Result, SplashError};
use crate::rng;

const RANDOM_TAG: u64 = 0x5241_4E44; // "RAND"
const RANDOM_ALL_TAG: u64 = 0x5246_5246; // "RFRF"

/// A rule assigning a feature vector to every node at every time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Process {
    /// Gaussian vectors for seen nodes, propagated to unseen ones.
    #[serde(rename = "R")]
    Random,
    /// node2vec embeddings for seen nodes, propagated to unseen ones.
    #[serde(rename = "P")]
    Positional,
    /// Sinusoidal encoding of the current degree.
    #[serde(rename = "S")]
    Structural,
    /// `[R ‖ P ‖ S]`.
    #[serde(rename = "Joint")]
    Joint,
    /// All-zero features (ablation).
    #[serde(rename = "ZF")]
    Zero,
    /// Fresh random features for every node, seen or not (ablation).
    #[serde(rename = "RF")]
    RandomAll,
}

impl Process {
    /// Candidates considered by automatic selection, in tie-break order.
    pub const SELECTABLE: [Process; 3] = [Process::Structural, Process::Positional, Process::Random];

    pub fn dim(self, d_v: usize) -> usize {
        match self {
            Process::Joint => 3 * d_v,
            _ => d_v,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Process::Random => "R",
            Process::Positional => "P",
            Process::Structural => "S",
            Process::Joint => "Joint",
            Process::Zero => "ZF",
            Process::RandomAll => "RF",
        }
    }

    /// Processes whose seen-node values live in a stored table.
    pub fn stored_dependencies(self) -> &'static [Process] {
        match self {
            Process::Random => &[Process::Random],
            Process::Positional => &[Process::Positional],
            Process::Joint => &[Process::Random, Process::Positional],
            Process::RandomAll => &[Process::RandomAll],
            Process::Structural | Process::Zero => &[],
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Process {
    type Err = SplashError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(Process::Random),
            "P" => Ok(Process::Positional),
            "S" => Ok(Process::Structural),
            "Joint" | "joint" => Ok(Process::Joint),
            "ZF" => Ok(Process::Zero),
            "RF" => Ok(Process::RandomAll),
            other => Err(SplashError::Config(format!("unknown feature process '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    pub d_v: usize,
    /// Resolution of the degree encoding; larger values smooth out small
    /// degree differences.
    pub degree_alpha: f64,
    pub rng_seed: u64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            d_v: 100,
            degree_alpha: 10.0,
            rng_seed: 0,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_v < 2 || !self.d_v.is_multiple_of(2) {
            return Err(SplashError::Config(format!(
                "feature dimension must be even and >= 2, got {}",
                self.d_v
            )));
        }
        if !(self.degree_alpha > 1.0) {
            return Err(SplashError::Config(format!(
                "degree resolution must exceed 1, got {}",
                self.degree_alpha
            )));
        }
        Ok(())
    }
}

/// Sinusoidal degree encoding. Even components are cosines, odd components
/// sines, sharing a frequency per (even, odd) pair.
pub fn structural_encode(deg: u64, cfg: &AugConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.d_v];
    structural_encode_into(deg, cfg, &mut out);
    out
}

pub fn structural_encode_into(deg: u64, cfg: &AugConfig, out: &mut [f64]) {
    let deg = deg as f64;
    with_degree_frequencies(cfg, |freqs| {
        for (pair, &freq) in out.chunks_mut(2).zip(freqs) {
            let (sin, cos) = (freq * deg).sin_cos();
            pair[0] = cos;
            if let Some(odd) = pair.get_mut(1) {
                *odd = sin;
            }
        }
    });
}

/// One frequency per (cos, sin) pair, cached per thread for the last
/// configuration seen.
fn with_degree_frequencies<R>(cfg: &AugConfig, f: impl FnOnce(&[f64]) -> R) -> R {
    thread_local! {
        static CACHE: RefCell<(usize, u64, Vec<f64>)> = const { RefCell::new((0, 0, Vec::new())) };
    }
    CACHE.with(|cell| {
        let mut cache = cell.borrow_mut();
        let key = (cfg.d_v, cfg.degree_alpha.to_bits());
        if (cache.0, cache.1) != key || cache.2.is_empty() {
            let scale = 2.0 * (cfg.d_v as f64).sqrt();
            let freqs = (0..cfg.d_v)
                .step_by(2)
                .map(|m| cfg.degree_alpha.powf(-(m as f64) / scale))
                .collect();
            *cache = (key.0, key.1, freqs);
        }
        f(&cache.2)
    })
}

/// Standard-normal vector that depends only on `(seed, tag, node)`.
fn node_gaussian(seed: u64, tag: u64, node: NodeId, d_v: usize) -> Arc<[f64]> {
    let mut r = rng::seeded(rng::derive(seed, tag), node);
    (0..d_v)
        .map(|_| StandardNormal.sample(&mut r))
        .collect::<Vec<f64>>()
        .into()
}

/// Per-process node features. Seen values are fixed after initialization;
/// unseen values start at zero and move only through propagation.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    process: Process,
    d_v: usize,
    seen_values: HashMap<NodeId, Arc<[f64]>>,
    unseen_values: HashMap<NodeId, Arc<[f64]>>,
    zero: Arc<[f64]>,
    seed: u64,
}

impl FeatureTable {
    fn empty(process: Process, d_v: usize, seed: u64) -> Self {
        Self {
            process,
            d_v,
            seen_values: HashMap::new(),
            unseen_values: HashMap::new(),
            zero: vec![0.0; d_v].into(),
            seed,
        }
    }

    /// Builds a positional table from externally computed embeddings.
    pub fn from_values(
        process: Process,
        d_v: usize,
        values: impl IntoIterator<Item = (NodeId, Vec<f64>)>,
    ) -> Result<Self> {
        let mut table = Self::empty(process, d_v, 0);
        for (node, v) in values {
            if v.len() != d_v {
                return Err(SplashError::Shape(format!(
                    "feature of node {node} has length {}, expected {d_v}",
                    v.len()
                )));
            }
            table.seen_values.insert(node, v.into());
        }
        Ok(table)
    }

    /// Random features for every node, drawn lazily on first use (ablation).
    pub fn random_all(cfg: &AugConfig) -> Self {
        Self::empty(Process::RandomAll, cfg.d_v, cfg.rng_seed)
    }

    pub fn process(&self) -> Process {
        self.process
    }

    pub fn dim(&self) -> usize {
        self.d_v
    }

    pub fn is_seen(&self, node: NodeId) -> bool {
        self.seen_values.contains_key(&node)
    }

    pub fn seen_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.seen_values.keys().copied()
    }

    pub fn seen_len(&self) -> usize {
        self.seen_values.len()
    }

    /// Current value; the zero vector for nodes that have none yet.
    pub fn value(&self, node: NodeId) -> Arc<[f64]> {
        if let Some(v) = self.seen_values.get(&node).or_else(|| self.unseen_values.get(&node)) {
            return v.clone();
        }
        if self.process == Process::RandomAll {
            return node_gaussian(self.seed, RANDOM_ALL_TAG, node, self.d_v);
        }
        self.zero.clone()
    }

    /// Materializes an RF value so later reads share it.
    pub(crate) fn touch(&mut self, node: NodeId) {
        if self.process == Process::RandomAll && !self.seen_values.contains_key(&node) {
            let v = node_gaussian(self.seed, RANDOM_ALL_TAG, node, self.d_v);
            self.seen_values.insert(node, v);
        }
    }

    /// Running-mean update of an unseen node's value with its neighbor's
    /// pre-edge value: `(deg * old + neighbor) / (deg + 1)`.
    pub fn propagate_on_edge(
        &mut self,
        node: NodeId,
        neighbor_feature: &[f64],
        pre_edge_degree: u64,
    ) -> Result<()> {
        if !matches!(self.process, Process::Random | Process::Positional) {
            return Err(SplashError::Contract(format!(
                "propagation is defined for R and P only, not {}",
                self.process
            )));
        }
        if self.seen_values.contains_key(&node) {
            return Err(SplashError::Contract(format!(
                "node {node} is seen; its {} features are fixed",
                self.process
            )));
        }
        if neighbor_feature.len() != self.d_v {
            return Err(SplashError::Shape(format!(
                "neighbor feature length {} != {}",
                neighbor_feature.len(),
                self.d_v
            )));
        }
        let deg = pre_edge_degree as f64;
        let old = self.unseen_values.get(&node).unwrap_or(&self.zero);
        let updated: Vec<f64> = old
            .iter()
            .zip(neighbor_feature)
            .map(|(&o, &n)| (deg * o + n) / (deg + 1.0))
            .collect();
        self.unseen_values.insert(node, updated.into());
        Ok(())
    }

    /// Writes `node_id,process,v_0,...` rows for every seen value, sorted by id.
    pub fn write_csv<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if with_header {
            let mut header = vec!["node_id".to_string(), "process".to_string()];
            header.extend((0..self.d_v).map(|i| format!("v_{i}")));
            w.write_record(&header)?;
        }
        let sorted: BTreeMap<_, _> = self.seen_values.iter().collect();
        for (node, v) in sorted {
            let mut rec = vec![node.to_string(), self.process.to_string()];
            rec.extend(v.iter().map(|x| format!("{x:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the feature CSV back into one table per process present in the file.
pub fn read_feature_csv<R: Read>(input: R) -> Result<BTreeMap<Process, FeatureTable>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut rows: BTreeMap<Process, Vec<(NodeId, Vec<f64>)>> = BTreeMap::new();
    let mut dim = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |msg: String| SplashError::Parse { line, msg };
        if rec.len() < 3 {
            return Err(bad("expected node_id,process,v_0,...".into()));
        }
        let node: NodeId = rec[0].trim().parse().map_err(|e| bad(format!("node id: {e}")))?;
        let process: Process = rec[1].trim().parse().map_err(|e: SplashError| bad(e.to_string()))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("value: {e}")))?;
        if *dim.get_or_insert(values.len()) != values.len() {
            return Err(bad("inconsistent feature dimension".into()));
        }
        rows.entry(process).or_default().push((node, values));
    }
    let d_v = dim.unwrap_or(0);
    rows.into_iter()
        .map(|(p, vals)| Ok((p, FeatureTable::from_values(p, d_v, vals)?)))
        .collect()
}

/// i.i.d. standard-normal features for every seen node, reproducible per seed.
pub fn init_random_features<I>(seen: I, cfg: &AugConfig) -> FeatureTable
where
    I: IntoIterator<Item = NodeId>,
{
    let mut table = FeatureTable::empty(Process::Random, cfg.d_v, cfg.rng_seed);
    for node in seen {
        table
            .seen_values
            .insert(node, node_gaussian(cfg.rng_seed, RANDOM_TAG, node, cfg.d_v));
    }
    table
}

/// Current feature of `node` under `process`, read from the stream state.
pub fn feature_at(state: &StreamState, process: Process, node: NodeId) -> Result<Vec<f64>> {
    let mut out = vec![0.0; process.dim(state.d_v())];
    write_feature_at(state, process, node, &mut out)?;
    Ok(out)
}

pub(crate) fn write_feature_at(
    state: &StreamState,
    process: Process,
    node: NodeId,
    out: &mut [f64],
) -> Result<()> {
    let d_v = state.d_v();
    match process {
        Process::Structural => {
            structural_encode_into(state.degree_at(node), state.aug_config(), out);
        }
        Process::Zero => out.fill(0.0),
        Process::Joint => {
            let (r, rest) = out.split_at_mut(d_v);
            let (p, s) = rest.split_at_mut(d_v);
            r.copy_from_slice(&state.table(Process::Random)?.value(node));
            p.copy_from_slice(&state.table(Process::Positional)?.value(node));
            structural_encode_into(state.degree_at(node), state.aug_config(), s);
        }
        Process::Random | Process::Positional | Process::RandomAll => {
            out.copy_from_slice(&state.table(process)?.value(node));
        }
    }
    Ok(())
}
