//! Throughput of the serving loop on generated streams with one query per
//! edge.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ctdg::{StreamConfig, StreamState};
use crate::datagen::gen_scalability;
use crate::error::Result;
use crate::features::{AugConfig, Process};
use crate::slim::{SlimConfig, SlimModel, TimeEncodingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n_nodes: u64,
    pub n_edges: u64,
    pub k: usize,
    /// Feature, time-encoding and hidden width.
    pub dim: usize,
    pub rng_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            n_edges: 10_000,
            k: 100,
            dim: 8,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub seconds: f64,
    pub events_per_second: f64,
    /// Mean per-event latency (seconds) of each tenth of the run.
    pub decile_latency: Vec<f64>,
    /// Largest per-event operation count (buffer writes plus query
    /// multiply-adds) over the run.
    pub max_ops_per_event: u64,
    /// Mean per-event operation count over the last tenth of the run.
    pub tail_ops_per_event: f64,
}

/// Ingests each edge and answers a query for its source.
pub fn run_scalability(cfg: &BenchConfig) -> Result<BenchReport> {
    let aug = AugConfig {
        d_v: cfg.dim,
        ..Default::default()
    };
    let mut state = StreamState::structural_only(StreamConfig {
        d_e: 0,
        k: cfg.k,
        aug,
        t_seen: f64::NEG_INFINITY,
    })?;
    let slim_cfg = SlimConfig {
        d_h: cfg.dim,
        time: TimeEncodingConfig {
            d_t: cfg.dim,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = SlimModel::new(slim_cfg, Process::Structural, cfg.dim, 0, 2, cfg.rng_seed)?;
    let stream = gen_scalability(cfg.n_nodes, cfg.n_edges, cfg.rng_seed)?;

    let n = cfg.n_edges as usize;
    let decile = n.div_ceil(10);
    let mut decile_latency = Vec::with_capacity(10);
    let mut max_ops = 0u64;
    let mut tail_ops = 0u64;
    let tail_start = n - n / 10;
    let mut sink = 0.0;
    let start = Instant::now();
    let mut decile_start = start;
    for (i, edge) in stream.enumerate() {
        let before = state.counters();
        state.ingest_edge(&edge)?;
        let probs = model.predict(&state, edge.src, edge.timestamp)?;
        sink += probs[0];
        let after = state.counters();
        let neighbors = state.recent_neighbors(edge.src, edge.timestamp).count();
        let ops = (after.entries_appended - before.entries_appended)
            + (after.evictions - before.evictions)
            + (after.propagation_flops - before.propagation_flops)
            + model.query_cost(neighbors);
        max_ops = max_ops.max(ops);
        if i >= tail_start {
            tail_ops += ops;
        }
        if (i + 1) % decile == 0 || i + 1 == n {
            let count = (i % decile) + 1;
            decile_latency.push(decile_start.elapsed().as_secs_f64() / count as f64);
            decile_start = Instant::now();
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    log::debug!("checksum {sink}");
    Ok(BenchReport {
        config: *cfg,
        seconds,
        events_per_second: n as f64 / seconds,
        decile_latency,
        max_ops_per_event: max_ops,
        tail_ops_per_event: tail_ops as f64 / (n - tail_start).max(1) as f64,
    })
}
