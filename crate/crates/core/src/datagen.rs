//! Synthetic edge streams: the class-shift benchmark and an unbounded
//! uniform stream for throughput runs.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, TemporalEdge};
use crate::error::{Result, SplashError};
use crate::nn::Target;
use crate::rng::{self, SplashRng};
use crate::task::{PropertyQuery, PropertySet, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftGenConfig {
    pub n_classes: usize,
    pub nodes_per_class: usize,
    pub n_edges: usize,
    pub time_span: f64,
    /// Shift intensity in percent, 50 (none) to 100 (full).
    pub p: u32,
    pub same_class_prob: f64,
    pub split: [f64; 3],
    pub rng_seed: u64,
}

impl Default for ShiftGenConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            nodes_per_class: 100,
            n_edges: 20_000,
            time_span: 1_000_000.0,
            p: 90,
            same_class_prob: 0.9,
            split: [0.1, 0.1, 0.8],
            rng_seed: 0,
        }
    }
}

impl ShiftGenConfig {
    pub fn n_nodes(&self) -> usize {
        self.n_classes * self.nodes_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if !(50..=100).contains(&self.p) {
            return Err(SplashError::Config(format!("shift intensity p={} outside [50, 100]", self.p)));
        }
        if self.nodes_per_class != 100 {
            return Err(SplashError::Config(
                "class-known set sizes are percentages of a 100-node class".into(),
            ));
        }
        if self.n_classes < 2 || !self.n_classes.is_multiple_of(2) {
            return Err(SplashError::Config("need an even number of classes (two groups)".into()));
        }
        if self.n_edges == 0 || !(self.time_span > 0.0) || !(0.0..=1.0).contains(&self.same_class_prob) {
            return Err(SplashError::Config("invalid edge count, time span or class probability".into()));
        }
        if self.split.iter().any(|&f| !(f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplashError::Config(format!("split {:?} must be positive and sum to 1", self.split)));
        }
        Ok(())
    }

    pub fn class_of(&self, node: NodeId) -> usize {
        node as usize / self.nodes_per_class
    }

    /// Group 0 holds the first half of the classes.
    pub fn group_of_class(&self, class: usize) -> usize {
        usize::from(class >= self.n_classes / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftManifest {
    pub config: ShiftGenConfig,
    /// Class-known node ids per class, sorted.
    pub class_known: Vec<Vec<NodeId>>,
    pub class_unknown: Vec<Vec<NodeId>>,
    /// Edge counts of the training, validation and test portions.
    pub portion_sizes: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDataset {
    pub edges: Vec<TemporalEdge>,
    pub props: PropertySet,
    pub manifest: ShiftManifest,
}

/// Class-shift stream: training sources come mostly from one group's
/// class-known nodes, later sources from the other group's class-unknown
/// nodes. One classification query per edge for its source.
pub fn gen_synthetic_shift(cfg: &ShiftGenConfig) -> Result<ShiftDataset> {
    cfg.validate()?;
    let mut r = rng::seeded(cfg.rng_seed, 0x7368_6966);
    let n_nodes = cfg.n_nodes();
    let p = cfg.p as usize;

    let mut class_known = Vec::with_capacity(cfg.n_classes);
    let mut class_unknown = Vec::with_capacity(cfg.n_classes);
    for c in 0..cfg.n_classes {
        let size = if cfg.group_of_class(c) == 0 { p } else { cfg.nodes_per_class - p };
        let base = (c * cfg.nodes_per_class) as NodeId;
        let mut known: Vec<NodeId> = index::sample(&mut r, cfg.nodes_per_class, size)
            .into_iter()
            .map(|i| base + i as NodeId)
            .collect();
        known.sort_unstable();
        let unknown: Vec<NodeId> = (0..cfg.nodes_per_class as NodeId)
            .map(|i| base + i)
            .filter(|n| known.binary_search(n).is_err())
            .collect();
        class_known.push(known);
        class_unknown.push(unknown);
    }
    let pool = |sets: &[Vec<NodeId>], group: usize| -> Vec<NodeId> {
        sets.iter()
            .enumerate()
            .filter(|(c, _)| cfg.group_of_class(*c) == group)
            .flat_map(|(_, s)| s.iter().copied())
            .collect()
    };
    let known_pools = [pool(&class_known, 0), pool(&class_known, 1)];
    let unknown_pools = [pool(&class_unknown, 0), pool(&class_unknown, 1)];

    let n_train = (cfg.split[0] * cfg.n_edges as f64).round() as usize;
    let n_val = (cfg.split[1] * cfg.n_edges as f64).round() as usize;
    let sizes = [n_train, n_val, cfg.n_edges - n_train - n_val];
    let bounds = [0.0, cfg.split[0], cfg.split[0] + cfg.split[1], 1.0].map(|f| f * cfg.time_span);
    let pf = p as f64 / 100.0;

    let mut edges = Vec::with_capacity(cfg.n_edges);
    for (portion, &size) in sizes.iter().enumerate() {
        let mut times: Vec<f64> = (0..size).map(|_| r.random_range(bounds[portion]..bounds[portion + 1])).collect();
        times.sort_by(f64::total_cmp);
        for t in times {
            let (pools, first_group_prob) = if portion == 0 {
                (&known_pools, pf)
            } else {
                (&unknown_pools, 1.0 - pf)
            };
            let group = usize::from(!r.random_bool(first_group_prob));
            let src = pick(&mut r, &pools[group])?;
            let dst = if r.random_bool(cfg.same_class_prob) {
                let class = cfg.class_of(src);
                (class * cfg.nodes_per_class + r.random_range(0..cfg.nodes_per_class)) as NodeId
            } else {
                r.random_range(0..n_nodes) as NodeId
            };
            edges.push(TemporalEdge::new(src, dst, t));
        }
    }
    let queries = edges
        .iter()
        .enumerate()
        .map(|(i, e)| PropertyQuery {
            node: e.src,
            time: e.timestamp,
            label: Target::Class(cfg.class_of(e.src)),
            position: i + 1,
        })
        .collect();
    Ok(ShiftDataset {
        props: PropertySet::new(TaskKind::Classification, cfg.n_classes, queries)?,
        edges,
        manifest: ShiftManifest {
            config: cfg.clone(),
            class_known,
            class_unknown,
            portion_sizes: sizes,
        },
    })
}

fn pick(r: &mut SplashRng, pool: &[NodeId]) -> Result<NodeId> {
    if pool.is_empty() {
        return Err(SplashError::Config("source pool is empty".into()));
    }
    Ok(pool[r.random_range(0..pool.len())])
}

/// Lazily generated stream of uniform random edges (no self-loops) at
/// times 1, 2, 3, ...
#[derive(Debug, Clone)]
pub struct ScalabilityStream {
    rng: SplashRng,
    n_nodes: u64,
    emitted: u64,
    n_edges: u64,
}

impl Iterator for ScalabilityStream {
    type Item = TemporalEdge;

    fn next(&mut self) -> Option<TemporalEdge> {
        if self.emitted == self.n_edges {
            return None;
        }
        self.emitted += 1;
        let src = self.rng.random_range(0..self.n_nodes);
        let mut dst = self.rng.random_range(0..self.n_nodes - 1);
        if dst >= src {
            dst += 1;
        }
        Some(TemporalEdge::new(src, dst, self.emitted as f64))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_edges - self.emitted) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for ScalabilityStream {}

pub fn gen_scalability(n_nodes: u64, n_edges: u64, rng_seed: u64) -> Result<ScalabilityStream> {
    if n_edges == 0 || n_nodes < 2 {
        return Err(SplashError::Config("scalability stream needs edges and at least two nodes".into()));
    }
    Ok(ScalabilityStream {
        rng: rng::seeded(rng_seed, 0x7363_616c),
        n_nodes,
        emitted: 0,
        n_edges,
    })
}
