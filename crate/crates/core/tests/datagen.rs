use std::collections::HashSet;

use splash::datagen::{gen_scalability, gen_synthetic_shift, ShiftDataset, ShiftGenConfig};
use splash::nn::Target;

fn shift(p: u32, seed: u64) -> ShiftDataset {
    gen_synthetic_shift(&ShiftGenConfig {
        p,
        rng_seed: seed,
        ..Default::default()
    })
    .unwrap()
}

fn binomial_ok(hits: usize, n: usize, prob: f64) -> bool {
    let mean = n as f64 * prob;
    let sd = (n as f64 * prob * (1.0 - prob)).sqrt();
    (hits as f64 - mean).abs() <= 3.0 * sd.max(1e-9)
}

#[test]
fn symmetric_case_set_sizes() {
    let d = gen_synthetic_shift(&ShiftGenConfig { p: 50, n_edges: 100, ..Default::default() }).unwrap();
    assert!(d.manifest.class_known.iter().all(|s| s.len() == 50));
    assert!(d.manifest.class_unknown.iter().all(|s| s.len() == 50));
}

#[test]
fn rejects_bad_intensity() {
    for p in [49, 101] {
        assert!(gen_synthetic_shift(&ShiftGenConfig { p, ..Default::default() }).is_err());
    }
}

#[test]
fn known_and_unknown_sets_partition_each_class() {
    let d = shift(90, 3);
    let cfg = &d.manifest.config;
    assert_eq!(cfg.n_nodes(), 1000);
    for c in 0..cfg.n_classes {
        let known = &d.manifest.class_known[c];
        let unknown = &d.manifest.class_unknown[c];
        let want = if c < 5 { 90 } else { 10 };
        assert_eq!(known.len(), want);
        assert_eq!(known.len() + unknown.len(), 100);
        let all: HashSet<u64> = known.iter().chain(unknown).copied().collect();
        assert_eq!(all.len(), 100);
        assert!(all.iter().all(|&n| cfg.class_of(n) == c));
    }
}

#[test]
fn training_sources_never_reappear_later() {
    let d = shift(90, 4);
    let [n_train, _, _] = d.manifest.portion_sizes;
    let known: HashSet<u64> = d.manifest.class_known.iter().flatten().copied().collect();
    let train: HashSet<u64> = d.edges[..n_train].iter().map(|e| e.src).collect();
    assert!(train.is_subset(&known));
    for e in &d.edges[n_train..] {
        assert!(!known.contains(&e.src));
        assert!(!train.contains(&e.src));
    }
}

#[test]
fn portions_are_timed_and_sorted() {
    let d = shift(70, 5);
    let [a, b, c] = d.manifest.portion_sizes;
    assert_eq!((a, b, c), (2000, 2000, 16000));
    assert!(d.edges.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    assert!(d.edges[..a].iter().all(|e| e.timestamp < 100_000.0));
    assert!(d.edges[a..a + b].iter().all(|e| (100_000.0..200_000.0).contains(&e.timestamp)));
    assert!(d.edges[a + b..].iter().all(|e| (200_000.0..1_000_000.0).contains(&e.timestamp)));
    assert!(d.edges.iter().all(|e| e.weight == 1.0 && e.features.is_empty()));
}

#[test]
fn same_class_destination_rate() {
    // 0.9 from the same-class branch plus 0.1 * 1/10 from uniform draws
    for seed in 0..3 {
        let d = shift(90, seed);
        let cfg = &d.manifest.config;
        let hits = d.edges.iter().filter(|e| cfg.class_of(e.src) == cfg.class_of(e.dst)).count();
        let rate = hits as f64 / d.edges.len() as f64;
        assert!((rate - 0.90).abs() <= 0.015, "seed {seed}: {rate}");
        assert!(binomial_ok(hits, d.edges.len(), 0.91), "seed {seed}: {rate}");
    }
}

#[test]
fn source_groups_follow_the_mixture() {
    for p in [50, 70, 90] {
        let d = shift(p, u64::from(p));
        let cfg = &d.manifest.config;
        let n_train = d.manifest.portion_sizes[0];
        let group1 = |edges: &[splash::TemporalEdge]| {
            edges.iter().filter(|e| cfg.group_of_class(cfg.class_of(e.src)) == 0).count()
        };
        let pf = f64::from(p) / 100.0;
        let (train, rest) = d.edges.split_at(n_train);
        assert!(binomial_ok(group1(train), train.len(), pf), "p={p} train");
        assert!(binomial_ok(group1(rest), rest.len(), 1.0 - pf), "p={p} rest");
    }
}

#[test]
fn one_query_per_edge_labelled_by_source_class() {
    let d = shift(50, 6);
    let cfg = &d.manifest.config;
    assert_eq!(d.props.queries.len(), d.edges.len());
    for (i, (q, e)) in d.props.queries.iter().zip(&d.edges).enumerate() {
        assert_eq!(q.position, i + 1);
        assert_eq!((q.node, q.time), (e.src, e.timestamp));
        assert_eq!(q.label, Target::Class(cfg.class_of(e.src)));
        assert_eq!(cfg.class_of(e.src), e.src as usize / 100);
    }
}

#[test]
fn full_shift_has_empty_pools_unused() {
    let d = shift(100, 1);
    let n_train = d.manifest.portion_sizes[0];
    let cfg = &d.manifest.config;
    assert!(d.edges[..n_train].iter().all(|e| cfg.class_of(e.src) < 5));
    assert!(d.edges[n_train..].iter().all(|e| cfg.class_of(e.src) >= 5));
}

#[test]
fn generation_is_seeded() {
    let small = |seed| {
        gen_synthetic_shift(&ShiftGenConfig { n_edges: 500, rng_seed: seed, ..Default::default() }).unwrap()
    };
    assert_eq!(small(9).edges, small(9).edges);
    assert_ne!(small(9).edges, small(10).edges);
}

#[test]
fn scalability_stream_is_increasing_and_seeded() {
    let a: Vec<_> = gen_scalability(1000, 10_000, 4).unwrap().collect();
    assert_eq!(a.len(), 10_000);
    assert!(a.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    assert!(a.iter().all(|e| e.src < 1000 && e.dst < 1000 && !e.is_self_loop()));
    let b: Vec<_> = gen_scalability(1000, 10_000, 4).unwrap().collect();
    assert_eq!(a, b);
}

#[test]
fn scalability_stream_state_is_constant_size() {
    let small = gen_scalability(1000, 10_000, 1).unwrap();
    let large = gen_scalability(1000, 1_000_000, 1).unwrap();
    assert_eq!(std::mem::size_of_val(&small), std::mem::size_of_val(&large));
    assert_eq!(large.len(), 1_000_000);
    assert!(gen_scalability(1, 10, 0).is_err());
    assert!(gen_scalability(10, 0, 0).is_err());
}
