use splash::ctdg::*;
use splash::features::feature_at;
use splash::{AugConfig, FeatureTable, Process, SplashError};

fn cfg(k: usize, d_v: usize) -> StreamConfig {
    StreamConfig {
        d_e: 0,
        k,
        aug: AugConfig {
            d_v,
            degree_alpha: 10.0,
            rng_seed: 1,
        },
        t_seen: f64::INFINITY,
    }
}

#[test]
fn first_edge_bookkeeping() {
    let mut s = StreamState::structural_only(cfg(2, 4)).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 5.0)).unwrap();
    assert_eq!(s.degree_at(1), 1);
    assert_eq!(s.degree_at(2), 1);
    assert_eq!(s.recent_neighbors(1, 5.0).count(), 1);
    assert_eq!(s.recent_neighbors(2, 5.0).next().unwrap().timestamp, 5.0);
    assert_eq!(s.current_time(), 5.0);
}

#[test]
fn eviction_keeps_latest() {
    let mut s = StreamState::structural_only(cfg(2, 4)).unwrap();
    for (i, other) in [1u64, 2, 3].into_iter().enumerate() {
        s.ingest_edge(&TemporalEdge::new(7, other, i as f64)).unwrap();
    }
    let kept: Vec<_> = s.recent_neighbors(7, 10.0).map(|e| e.other).collect();
    assert_eq!(kept, vec![2, 3]);
    assert_eq!(s.degree_at(7), 3);
}

#[test]
fn inclusive_cutoff_and_unknown_nodes() {
    let mut s = StreamState::structural_only(cfg(3, 4)).unwrap();
    for t in [1.0, 2.0, 3.0] {
        s.ingest_edge(&TemporalEdge::new(1, 9, t)).unwrap();
    }
    let ts: Vec<f64> = s.recent_neighbors(1, 2.0).map(|e| e.timestamp).collect();
    assert_eq!(ts, vec![1.0, 2.0]);
    assert_eq!(s.recent_neighbors(42, 3.0).count(), 0);
    assert_eq!(s.degree_at(42), 0);
}

#[test]
fn degree_counts_both_roles() {
    let mut s = StreamState::structural_only(cfg(3, 4)).unwrap();
    s.ingest_edge(&TemporalEdge::new(5, 1, 1.0)).unwrap();
    s.ingest_edge(&TemporalEdge::new(5, 2, 2.0)).unwrap();
    s.ingest_edge(&TemporalEdge::new(3, 5, 3.0)).unwrap();
    assert_eq!(s.degree_at(5), 3);
}

#[test]
fn self_loop_counts_once() {
    let mut s = StreamState::structural_only(cfg(3, 4)).unwrap();
    s.ingest_edge(&TemporalEdge::new(4, 4, 1.0)).unwrap();
    assert_eq!(s.degree_at(4), 1);
    assert_eq!(s.recent_neighbors(4, 1.0).count(), 1);
}

#[test]
fn rejects_out_of_order_and_bad_dims() {
    let mut s = StreamState::structural_only(cfg(3, 4)).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 5.0)).unwrap();
    assert!(matches!(
        s.ingest_edge(&TemporalEdge::new(1, 2, 4.0)),
        Err(SplashError::StreamOrder { .. })
    ));
    assert!(matches!(
        s.ingest_edge(&TemporalEdge::new(1, 2, 6.0).with_features(vec![1.0])),
        Err(SplashError::Format(_))
    ));
    // equal timestamps are fine
    s.ingest_edge(&TemporalEdge::new(2, 3, 5.0)).unwrap();
}

#[test]
fn snapshot_accumulates_undirected_weights() {
    let mut s = StreamState::structural_only(cfg(3, 4)).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 1.0).with_weight(1.0)).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 2.0).with_weight(2.0)).unwrap();
    s.ingest_edge(&TemporalEdge::new(2, 1, 3.0)).unwrap();
    let g = s.snapshot();
    assert_eq!(g.edge_weights.len(), 1);
    assert_eq!(g.weight(2, 1), Some(4.0));
    assert!(StreamState::structural_only(cfg(3, 4)).unwrap().snapshot().is_empty());
}

#[test]
fn snapshot_stops_at_training_end() {
    let mut c = cfg(3, 4);
    c.t_seen = 2.0;
    let mut s = StreamState::structural_only(c).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 1.0)).unwrap();
    s.ingest_edge(&TemporalEdge::new(3, 4, 3.0)).unwrap();
    assert_eq!(s.snapshot().nodes.len(), 2);
}

#[test]
fn worked_propagation_example_through_stream() {
    let c = cfg(4, 2);
    let r = FeatureTable::from_values(
        Process::Random,
        2,
        [(1, vec![0.1, -0.2]), (2, vec![0.1, 0.3])],
    )
    .unwrap();
    let mut s = StreamState::new(c, [1u64, 2], [r]).unwrap();
    s.ingest_edge(&TemporalEdge::new(11, 1, 10.0)).unwrap();
    assert_eq!(feature_at(&s, Process::Random, 11).unwrap(), vec![0.1, -0.2]);
    s.ingest_edge(&TemporalEdge::new(11, 2, 11.0)).unwrap();
    let v = feature_at(&s, Process::Random, 11).unwrap();
    assert!((v[0] - 0.1).abs() < 1e-12 && (v[1] - 0.05).abs() < 1e-12);
    // seen nodes never move
    assert_eq!(feature_at(&s, Process::Random, 1).unwrap(), vec![0.1, -0.2]);
    // the buffer of node 1 snapshots node 11 after its update
    let e = s.recent_neighbors(1, 11.0).next().unwrap();
    assert_eq!(&*e.snapshot.random.clone().unwrap(), &[0.1, -0.2]);
    assert_eq!(e.snapshot.degree, 1);
}

#[test]
fn both_unseen_use_pre_edge_values() {
    let c = cfg(4, 2);
    let r = FeatureTable::from_values(Process::Random, 2, [(1, vec![1.0, 1.0]), (2, vec![3.0, 3.0])])
        .unwrap();
    let mut s = StreamState::new(c, [], [r]).unwrap();
    s.ingest_edge(&TemporalEdge::new(10, 1, 1.0)).unwrap(); // r10 = [1,1]
    s.ingest_edge(&TemporalEdge::new(20, 2, 2.0)).unwrap(); // r20 = [3,3]
    s.ingest_edge(&TemporalEdge::new(10, 20, 3.0)).unwrap();
    // r10 = (1*[1,1] + [3,3]) / 2, r20 = (1*[3,3] + [1,1]) / 2
    assert_eq!(feature_at(&s, Process::Random, 10).unwrap(), vec![2.0, 2.0]);
    assert_eq!(feature_at(&s, Process::Random, 20).unwrap(), vec![2.0, 2.0]);
}
