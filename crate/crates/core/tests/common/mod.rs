//! Shared dataset constructions for the integration and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use splash::harness::io::{DatasetMeta, EdgeFormat};
use splash::harness::pipeline::Prepared;
use splash::nn::Target;
use splash::task::{PropertyQuery, PropertySet, TaskKind};
use splash::{rng, TemporalEdge};

pub fn native_meta(n_nodes: usize, label_dim: usize) -> DatasetMeta {
    DatasetMeta {
        format: EdgeFormat::Native,
        d_e: 0,
        n_nodes,
        label_dim,
        affinity_window: None,
        items: Vec::new(),
        item_offset: None,
    }
}

pub fn prepared(edges: Vec<TemporalEdge>, queries: Vec<PropertyQuery>, n_nodes: usize, label_dim: usize) -> Prepared {
    let props = PropertySet::new(TaskKind::Classification, label_dim, queries).unwrap();
    Prepared::new(edges, props, native_meta(n_nodes, label_dim), [0.1, 0.1, 0.8]).unwrap()
}

/// Planted communities: node labels are their community, destinations stay
/// inside the source's community with probability 0.9, and every node has
/// the same expected degree. Node ids are shuffled across communities.
pub fn community_stream(n_comm: usize, per_comm: usize, n_edges: usize, seed: u64) -> Prepared {
    let mut r = rng::seeded(seed, 0xc0);
    let n = n_comm * per_comm;
    let mut ids: Vec<u64> = (0..n as u64).collect();
    ids.shuffle(&mut r);
    let members: Vec<&[u64]> = ids.chunks(per_comm).collect();
    let mut community = vec![0usize; n];
    for (c, m) in members.iter().enumerate() {
        for &id in m.iter() {
            community[id as usize] = c;
        }
    }
    let mut edges = Vec::with_capacity(n_edges);
    let mut queries = Vec::with_capacity(n_edges);
    for i in 0..n_edges {
        let src = r.random_range(0..n as u64);
        let c = community[src as usize];
        let dst = if r.random::<f64>() < 0.9 {
            members[c][r.random_range(0..per_comm)]
        } else {
            r.random_range(0..n as u64)
        };
        let t = (i + 1) as f64;
        edges.push(TemporalEdge::new(src, dst, t));
        queries.push(PropertyQuery {
            node: src,
            time: t,
            label: Target::Class(c),
            position: i + 1,
        });
    }
    prepared(edges, queries, n, n_comm)
}

/// Degree buckets of a query node at query time.
pub const DEGREE_BUCKETS: [u64; 3] = [5, 15, 30];

pub fn degree_bucket(deg: u64) -> usize {
    DEGREE_BUCKETS.iter().filter(|&&b| deg >= b).count()
}

/// Uniform edges over a fixed number of slots. Each slot holds a node
/// that retires at a random degree in [10, 60] and is replaced by a fresh
/// id, so query-time degrees are stationary after the warm-up. Every edge
/// after the warm-up queries its source with the bucket of its degree.
pub fn degree_stream(slots: usize, warmup: usize, n_queries: usize, seed: u64) -> Prepared {
    let mut r = rng::seeded(seed, 0xde);
    let mut next_id = slots as u64;
    let mut holder: Vec<(u64, u64, u64)> = (0..slots as u64).map(|id| (id, 0, r.random_range(10..=60))).collect();
    let mut edges = Vec::with_capacity(warmup + n_queries);
    let mut queries = Vec::with_capacity(n_queries);
    for i in 0..warmup + n_queries {
        let a = r.random_range(0..slots);
        let mut b = r.random_range(0..slots - 1);
        if b >= a {
            b += 1;
        }
        let t = (i + 1) as f64;
        edges.push(TemporalEdge::new(holder[a].0, holder[b].0, t));
        holder[a].1 += 1;
        holder[b].1 += 1;
        if i >= warmup {
            queries.push(PropertyQuery {
                node: holder[a].0,
                time: t,
                label: Target::Class(degree_bucket(holder[a].1)),
                position: i + 1,
            });
        }
        for s in [a, b] {
            if holder[s].1 >= holder[s].2 {
                holder[s] = (next_id, 0, r.random_range(10..=60));
                next_id += 1;
            }
        }
    }
    prepared(edges, queries, next_id as usize, DEGREE_BUCKETS.len() + 1)
}
