//! Positional node embeddings: node2vec second-order biased walks over the
//! accumulated training snapshot, followed by skip-gram with negative
//! sampling.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StaticGraph};
use crate::error::{Result, SplashError};
use crate::features::{FeatureTable, Process};
use crate::par::{self, Parallelism};
use crate::rng::{self, SplashRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Return parameter p; large values discourage stepping back.
    pub return_p: f64,
    /// In-out parameter q.
    pub inout_q: f64,
    pub rng_seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 10,
            walks_per_node: 80,
            return_p: 10.0,
            inout_q: 1.0,
            rng_seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(SplashError::Config("walk length must be at least 2".into()));
        }
        if !(self.return_p > 0.0 && self.inout_q > 0.0) {
            return Err(SplashError::Config("node2vec p and q must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub embed_dim: usize,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly towards `learning_rate * 1e-4`.
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            window: 10,
            negatives_per_positive: 5,
            epochs: 1,
            learning_rate: 0.025,
            rng_seed: 0,
        }
    }
}

/// Sorted adjacency with cumulative weights for first-order sampling.
struct WalkGraph {
    nodes: Vec<NodeId>,
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl WalkGraph {
    fn new(graph: &StaticGraph) -> Self {
        let adj = graph.adjacency();
        let nodes: Vec<NodeId> = adj.keys().copied().collect();
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut neighbors = Vec::with_capacity(nodes.len());
        let mut weights = Vec::with_capacity(nodes.len());
        for list in adj.values() {
            neighbors.push(list.iter().map(|(n, _)| index[n]).collect());
            weights.push(list.iter().map(|&(_, w)| w).collect());
        }
        Self {
            nodes,
            neighbors,
            weights,
        }
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    fn sample(weights: impl Iterator<Item = f64> + Clone, rng: &mut SplashRng) -> usize {
        let total: f64 = weights.clone().sum();
        let mut x = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            last = i;
            if x < w {
                return i;
            }
            x -= w;
        }
        last
    }

    fn walk(&self, start: usize, cfg: &WalkConfig, rng: &mut SplashRng) -> Vec<NodeId> {
        let mut walk = vec![start];
        while walk.len() < cfg.walk_length {
            let cur = *walk.last().expect("non-empty");
            let nbrs = &self.neighbors[cur];
            if nbrs.is_empty() {
                break;
            }
            let ws = &self.weights[cur];
            let next = match walk.len() {
                1 => nbrs[Self::sample(ws.iter().copied(), rng)],
                n => {
                    let prev = walk[n - 2];
                    let biased = nbrs.iter().zip(ws).map(|(&x, &w)| {
                        if x == prev {
                            w / cfg.return_p
                        } else if self.is_adjacent(prev, x) {
                            w
                        } else {
                            w / cfg.inout_q
                        }
                    });
                    nbrs[Self::sample(biased, rng)]
                }
            };
            walk.push(next);
        }
        walk.into_iter().map(|i| self.nodes[i]).collect()
    }
}

/// `walks_per_node` rounds of one walk from every node (in id order).
/// Each walk draws from its own seeded stream, so the result does not
/// depend on the execution mode.
pub fn generate_walks(graph: &StaticGraph, cfg: &WalkConfig, mode: Parallelism) -> Result<Vec<Vec<NodeId>>> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(SplashError::Config("cannot walk an empty graph".into()));
    }
    let wg = WalkGraph::new(graph);
    let n = wg.nodes.len();
    Ok(par::map_range(mode, n * cfg.walks_per_node, |job| {
        let start = job % n;
        let mut r = rng::seeded(cfg.rng_seed, job as u64);
        wg.walk(start, cfg, &mut r)
    }))
}

#[derive(Debug, Clone)]
pub struct SkipGramOutput {
    pub embeddings: BTreeMap<NodeId, Vec<f64>>,
    /// Mean negative-sampling loss per positive pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    for i in 0..n {
        y[i] += alpha * x[i];
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling over walk windows. Serial and
/// deterministic for a fixed seed.
pub fn train_skipgram(walks: &[Vec<NodeId>], cfg: &SkipGramConfig) -> Result<SkipGramOutput> {
    if walks.iter().all(|w| w.is_empty()) {
        return Err(SplashError::Config("no walks to train on".into()));
    }
    if cfg.embed_dim == 0 {
        return Err(SplashError::Config("embedding dimension must be positive".into()));
    }
    let mut vocab: Vec<NodeId> = walks.iter().flatten().copied().collect();
    vocab.sort_unstable();
    vocab.dedup();
    let index: HashMap<NodeId, usize> = vocab.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let corpus: Vec<Vec<usize>> = walks
        .iter()
        .map(|w| w.iter().map(|n| index[n]).collect())
        .collect();

    // unigram^0.75 noise distribution, sampled by binary search
    let mut counts = vec![0f64; vocab.len()];
    corpus.iter().flatten().for_each(|&i| counts[i] += 1.0);
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for c in &counts {
        acc += c.powf(0.75);
        cumulative.push(acc);
    }

    let dim = cfg.embed_dim;
    let mut r = rng::seeded(cfg.rng_seed, 0x7367_6e73);
    let mut input: Vec<f32> = (0..vocab.len() * dim)
        .map(|_| (r.random::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output = vec![0f32; vocab.len() * dim];
    let mut grad_in = vec![0f32; dim];

    let tokens_per_epoch: usize = corpus.iter().map(Vec::len).sum();
    let total_tokens = (tokens_per_epoch * cfg.epochs).max(1) as f64;
    let min_lr = cfg.learning_rate * 1e-4;
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut loss = 0f64;
        let mut pairs = 0usize;
        for &wi in &order {
            let walk = &corpus[wi];
            for (i, &center) in walk.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - processed as f64 / total_tokens)).max(min_lr) as f32;
                processed += 1;
                // shrunk window, drawn per center
                let window = r.random_range(1..=cfg.window.max(1));
                let lo = i.saturating_sub(window);
                let hi = (i + window).min(walk.len() - 1);
                for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    pairs += 1;
                    grad_in.fill(0.0);
                    let u = center * dim;
                    for s in 0..=cfg.negatives_per_positive {
                        let (target, label) = if s == 0 {
                            (context, 1.0f32)
                        } else {
                            let x = r.random::<f64>() * acc;
                            let t = cumulative.partition_point(|&c| c <= x).min(vocab.len() - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target * dim;
                        let score = dot(&input[u..u + dim], &output[o..o + dim]);
                        let p = sigmoid(score);
                        let q = if label > 0.0 { p } else { 1.0 - p };
                        loss -= f64::from(q.max(1e-7).ln());
                        let g = lr * (label - p);
                        axpy(g, &output[o..o + dim], &mut grad_in);
                        let (inp, out) = (&input[u..u + dim], &mut output[o..o + dim]);
                        axpy(g, inp, out);
                    }
                    axpy(1.0, &grad_in, &mut input[u..u + dim]);
                }
            }
        }
        epoch_losses.push(loss / pairs.max(1) as f64);
    }

    let embeddings = vocab
        .iter()
        .enumerate()
        .map(|(i, &node)| {
            (node, input[i * dim..(i + 1) * dim].iter().map(|&x| f64::from(x)).collect())
        })
        .collect();
    Ok(SkipGramOutput {
        embeddings,
        epoch_losses,
    })
}

/// Positional feature table for every node of the snapshot.
pub fn fit_positional(
    graph: &StaticGraph,
    wcfg: &WalkConfig,
    scfg: &SkipGramConfig,
    mode: Parallelism,
) -> Result<FeatureTable> {
    if graph.is_empty() {
        return Err(SplashError::Config("positional features need a non-empty snapshot".into()));
    }
    let walks = generate_walks(graph, wcfg, mode)?;
    let out = train_skipgram(&walks, scfg)?;
    let mut values = Vec::with_capacity(graph.nodes.len());
    for &node in &graph.nodes {
        let v = out.embeddings.get(&node).cloned().unwrap_or_else(|| {
            log::warn!("node {node} absent from all walks; using a zero embedding");
            vec![0.0; scfg.embed_dim]
        });
        values.push((node, v));
    }
    FeatureTable::from_values(Process::Positional, scfg.embed_dim, values)
}
