//! Continuous-time dynamic graph model: edge events, per-node recent-edge
//! buffers with feature snapshots, degrees, and the accumulated snapshot used
//! for positional embedding.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SplashError};
use crate::features::{self, AugConfig, FeatureTable, Process};

pub type NodeId = u64;

/// One stream event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: f64,
    #[serde(default)]
    pub features: Vec<f64>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl TemporalEdge {
    pub fn new(src: NodeId, dst: NodeId, timestamp: f64) -> Self {
        Self {
            src,
            dst,
            timestamp,
            features: Vec::new(),
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = features;
        self
    }

    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// Feature values of a neighbor frozen at the time of the edge.
///
/// The structural component is kept as the degree it encodes; the stored
/// vectors are shared immutable copies.
#[derive(Debug, Clone)]
pub struct FeatureSnapshot {
    pub degree: u64,
    pub random: Option<Arc<[f64]>>,
    pub positional: Option<Arc<[f64]>>,
    pub random_all: Option<Arc<[f64]>>,
}

impl FeatureSnapshot {
    pub fn write(&self, process: Process, cfg: &AugConfig, out: &mut [f64]) -> Result<()> {
        let d_v = cfg.d_v;
        let missing = |p: Process| SplashError::State(format!("snapshot has no {p} features"));
        let copy = |src: &Option<Arc<[f64]>>, p: Process, dst: &mut [f64]| -> Result<()> {
            dst.copy_from_slice(src.as_deref().ok_or_else(|| missing(p))?);
            Ok(())
        };
        match process {
            Process::Structural => features::structural_encode_into(self.degree, cfg, out),
            Process::Zero => out.fill(0.0),
            Process::Random => copy(&self.random, process, out)?,
            Process::Positional => copy(&self.positional, process, out)?,
            Process::RandomAll => copy(&self.random_all, process, out)?,
            Process::Joint => {
                let (r, rest) = out.split_at_mut(d_v);
                let (p, s) = rest.split_at_mut(d_v);
                copy(&self.random, Process::Random, r)?;
                copy(&self.positional, Process::Positional, p)?;
                features::structural_encode_into(self.degree, cfg, s);
            }
        }
        Ok(())
    }

    pub fn to_vec(&self, process: Process, cfg: &AugConfig) -> Result<Vec<f64>> {
        let mut out = vec![0.0; process.dim(cfg.d_v)];
        self.write(process, cfg, &mut out)?;
        Ok(out)
    }
}

/// A recent incident edge as seen from one endpoint.
#[derive(Debug, Clone)]
pub struct NeighborEntry {
    pub other: NodeId,
    pub timestamp: f64,
    pub edge_feature: Arc<[f64]>,
    pub weight: f64,
    pub snapshot: FeatureSnapshot,
}

/// Undirected accumulated graph with summed weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticGraph {
    pub nodes: BTreeSet<NodeId>,
    /// Keyed by `(min, max)` endpoint pair.
    pub edge_weights: BTreeMap<(NodeId, NodeId), f64>,
}

impl StaticGraph {
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, weight: f64) {
        self.nodes.insert(a);
        self.nodes.insert(b);
        *self.edge_weights.entry((a.min(b), a.max(b))).or_insert(0.0) += weight;
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = &'a TemporalEdge>) -> Self {
        let mut g = Self::default();
        for e in edges {
            g.add_edge(e.src, e.dst, e.weight);
        }
        g
    }

    pub fn weight(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.edge_weights.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sorted weighted adjacency lists.
    pub fn adjacency(&self) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> =
            self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for (&(a, b), &w) in &self.edge_weights {
            adj.get_mut(&a).expect("endpoint registered").push((b, w));
            if a != b {
                adj.get_mut(&b).expect("endpoint registered").push((a, w));
            }
        }
        for list in adj.values_mut() {
            list.sort_by_key(|&(n, _)| n);
        }
        adj
    }
}

/// Work counters for the constant-cost-per-event contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub edges: u64,
    /// Scalar multiply-adds spent in propagation.
    pub propagation_flops: u64,
    pub entries_appended: u64,
    pub evictions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamConfig {
    pub d_e: usize,
    /// Maximum recent neighbors kept per node.
    pub k: usize,
    pub aug: AugConfig,
    /// Training end; edges up to this time feed the accumulated snapshot.
    pub t_seen: f64,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SplashError::Config("k must be positive".into()));
        }
        self.aug.validate()
    }
}

/// Mutable per-stream state. Writes are serialized through [`ingest_edge`];
/// everything else is a read.
///
/// [`ingest_edge`]: StreamState::ingest_edge
#[derive(Debug, Clone)]
pub struct StreamState {
    cfg: StreamConfig,
    seen: HashSet<NodeId>,
    degrees: HashMap<NodeId, u64>,
    buffers: HashMap<NodeId, VecDeque<NeighborEntry>>,
    current_time: f64,
    random: Option<FeatureTable>,
    positional: Option<FeatureTable>,
    random_all: Option<FeatureTable>,
    accumulated: StaticGraph,
    counters: OpCounters,
}

impl StreamState {
    /// `tables` supplies the stored processes to maintain; their seen
    /// nodes together with `seen` form the seen set.
    pub fn new(
        cfg: StreamConfig,
        seen: impl IntoIterator<Item = NodeId>,
        tables: impl IntoIterator<Item = FeatureTable>,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut state = Self {
            seen: seen.into_iter().collect(),
            degrees: HashMap::new(),
            buffers: HashMap::new(),
            current_time: f64::NEG_INFINITY,
            random: None,
            positional: None,
            random_all: None,
            accumulated: StaticGraph::default(),
            counters: OpCounters::default(),
            cfg,
        };
        for table in tables {
            if table.dim() != state.cfg.aug.d_v {
                return Err(SplashError::Shape(format!(
                    "{} table has dimension {}, stream expects {}",
                    table.process(),
                    table.dim(),
                    state.cfg.aug.d_v
                )));
            }
            if matches!(table.process(), Process::Random | Process::Positional) {
                state.seen.extend(table.seen_nodes());
            }
            let slot = match table.process() {
                Process::Random => &mut state.random,
                Process::Positional => &mut state.positional,
                Process::RandomAll => &mut state.random_all,
                p => {
                    return Err(SplashError::Config(format!("{p} has no stored table")));
                }
            };
            *slot = Some(table);
        }
        Ok(state)
    }

    /// State with only structural features (no stored tables).
    pub fn structural_only(cfg: StreamConfig) -> Result<Self> {
        Self::new(cfg, std::iter::empty(), std::iter::empty())
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn aug_config(&self) -> &AugConfig {
        &self.cfg.aug
    }

    pub fn d_v(&self) -> usize {
        self.cfg.aug.d_v
    }

    pub fn d_e(&self) -> usize {
        self.cfg.d_e
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn t_seen(&self) -> f64 {
        self.cfg.t_seen
    }

    pub fn current_time(&self) -> f64 {
        self.current_time
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn is_seen(&self, node: NodeId) -> bool {
        self.seen.contains(&node)
    }

    pub fn supports(&self, process: Process) -> bool {
        process
            .stored_dependencies()
            .iter()
            .all(|&p| self.table(p).is_ok())
    }

    pub fn table(&self, process: Process) -> Result<&FeatureTable> {
        let slot = match process {
            Process::Random => &self.random,
            Process::Positional => &self.positional,
            Process::RandomAll => &self.random_all,
            _ => &None,
        };
        slot.as_ref()
            .ok_or_else(|| SplashError::Config(format!("process {process} is not active")))
    }

    pub fn degree_at(&self, node: NodeId) -> u64 {
        self.degrees.get(&node).copied().unwrap_or(0)
    }

    /// Up to k stored entries with `timestamp <= t`, oldest first.
    pub fn recent_neighbors(&self, node: NodeId, t: f64) -> impl Iterator<Item = &NeighborEntry> {
        self.buffers
            .get(&node)
            .into_iter()
            .flatten()
            .filter(move |e| e.timestamp <= t)
    }

    pub fn snapshot(&self) -> StaticGraph {
        self.accumulated.clone()
    }

    pub fn validate_edge(&self, edge: &TemporalEdge) -> Result<()> {
        if !edge.timestamp.is_finite() || edge.timestamp < 0.0 {
            return Err(SplashError::Format(format!(
                "edge timestamp must be finite and non-negative, got {}",
                edge.timestamp
            )));
        }
        if edge.timestamp < self.current_time {
            return Err(SplashError::StreamOrder {
                current: self.current_time,
                got: edge.timestamp,
                line: None,
            });
        }
        if edge.features.len() != self.cfg.d_e {
            return Err(SplashError::Format(format!(
                "edge feature length {} != declared {}",
                edge.features.len(),
                self.cfg.d_e
            )));
        }
        Ok(())
    }

    /// Applies one edge: propagation for unseen endpoints using pre-edge
    /// values, degree increments, then buffer appends carrying each
    /// neighbor's post-update snapshot.
    pub fn ingest_edge(&mut self, edge: &TemporalEdge) -> Result<()> {
        self.validate_edge(edge)?;
        let (u, v) = (edge.src, edge.dst);
        let self_loop = edge.is_self_loop();

        if let Some(rf) = self.random_all.as_mut() {
            rf.touch(u);
            rf.touch(v);
        }

        let deg_u = self.degree_at(u);
        let deg_v = self.degree_at(v);
        let d_v = self.cfg.aug.d_v as u64;
        for table in [self.random.as_mut(), self.positional.as_mut()].into_iter().flatten() {
            let pre_u = table.value(u);
            let pre_v = table.value(v);
            if !self.seen.contains(&u) {
                table.propagate_on_edge(u, &pre_v, deg_u)?;
                self.counters.propagation_flops += d_v;
            }
            if !self_loop && !self.seen.contains(&v) {
                table.propagate_on_edge(v, &pre_u, deg_v)?;
                self.counters.propagation_flops += d_v;
            }
        }

        *self.degrees.entry(u).or_insert(0) += 1;
        if !self_loop {
            *self.degrees.entry(v).or_insert(0) += 1;
        }

        let edge_feature: Arc<[f64]> = edge.features.clone().into();
        let snap_u = self.snapshot_of(u);
        let snap_v = if self_loop { snap_u.clone() } else { self.snapshot_of(v) };
        self.push_entry(u, NeighborEntry {
            other: v,
            timestamp: edge.timestamp,
            edge_feature: edge_feature.clone(),
            weight: edge.weight,
            snapshot: snap_v,
        });
        if !self_loop {
            self.push_entry(v, NeighborEntry {
                other: u,
                timestamp: edge.timestamp,
                edge_feature,
                weight: edge.weight,
                snapshot: snap_u,
            });
        }

        if edge.timestamp <= self.cfg.t_seen {
            self.accumulated.add_edge(u, v, edge.weight);
        }
        self.current_time = edge.timestamp;
        self.counters.edges += 1;
        Ok(())
    }

    /// Moves the clock forward without an edge (query events).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.current_time {
            return Err(SplashError::StreamOrder {
                current: self.current_time,
                got: t,
                line: None,
            });
        }
        self.current_time = t;
        Ok(())
    }

    fn snapshot_of(&self, node: NodeId) -> FeatureSnapshot {
        FeatureSnapshot {
            degree: self.degree_at(node),
            random: self.random.as_ref().map(|t| t.value(node)),
            positional: self.positional.as_ref().map(|t| t.value(node)),
            random_all: self.random_all.as_ref().map(|t| t.value(node)),
        }
    }

    fn push_entry(&mut self, node: NodeId, entry: NeighborEntry) {
        let k = self.cfg.k;
        let buf = self.buffers.entry(node).or_insert_with(|| VecDeque::with_capacity(k.min(16)));
        buf.push_back(entry);
        self.counters.entries_appended += 1;
        if buf.len() > k {
            buf.pop_front();
            self.counters.evictions += 1;
        }
    }

    /// Number of nodes with at least one ingested edge.
    pub fn node_count(&self) -> usize {
        self.degrees.len()
    }
}
