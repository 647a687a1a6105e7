use splash::slim::*;
use splash::ctdg::{StreamConfig, TemporalEdge};
use ndarray::{s, Array2};
use splash::nn::Target;
use splash::task::TaskKind;
use splash::{AugConfig, Process, StreamState};

fn small_cfg(d: usize) -> SlimConfig {
    SlimConfig {
        d_h: d,
        time: TimeEncodingConfig { d_t: d, alpha: 10.0, beta: 10.0 },
        ..Default::default()
    }
}

fn toy_state(d_v: usize, k: usize) -> StreamState {
    let cfg = StreamConfig {
        d_e: 2,
        k,
        aug: AugConfig { d_v, degree_alpha: 10.0, rng_seed: 3 },
        t_seen: f64::INFINITY,
    };
    let mut s = StreamState::structural_only(cfg).unwrap();
    for (i, (a, b)) in [(1, 2), (1, 3), (2, 3), (1, 4), (4, 2)].into_iter().enumerate() {
        let e = TemporalEdge::new(a, b, i as f64 + 1.0)
            .with_features(vec![0.1 * i as f64, -0.2])
            .with_weight(1.0 + 0.5 * i as f64);
        s.ingest_edge(&e).unwrap();
    }
    s
}

#[test]
fn time_encoding_values() {
    let c = TimeEncodingConfig::default();
    assert!(time_encode(0.0, &c).iter().all(|&v| v == 1.0));
    assert!((time_encode(std::f64::consts::PI, &c)[0] + 1.0).abs() < 1e-15);
    let v = time_encode(123.4, &c);
    for (n, x) in v.iter().enumerate() {
        let expect = (123.4 / 10f64.powf(n as f64 / 10.0)).cos();
        assert!((x - expect).abs() < 1e-12);
    }
}

#[test]
fn raw_message_layout() {
    let s = toy_state(4, 3);
    let time = TimeEncodingConfig { d_t: 3, ..Default::default() };
    let entry = s.recent_neighbors(1, 5.0).last().unwrap().clone();
    let raw = build_raw_message(&entry, entry.timestamp, Process::Structural, s.aug_config(), &time).unwrap();
    assert_eq!(raw.len(), 4 + 2 + 3);
    assert_eq!(&raw[..4], &entry.snapshot.to_vec(Process::Structural, s.aug_config()).unwrap()[..]);
    assert_eq!(&raw[4..6], &entry.edge_feature[..]);
    assert!(raw[6..].iter().all(|&v| v == 1.0));
    assert!(build_raw_message(&entry, entry.timestamp - 1.0, Process::Structural, s.aug_config(), &time).is_err());
    // missing snapshot for an inactive process
    assert!(build_raw_message(&entry, 6.0, Process::Random, s.aug_config(), &time).is_err());
}

#[test]
fn raw_message_without_edge_features() {
    let cfg = StreamConfig {
        d_e: 0,
        k: 2,
        aug: AugConfig { d_v: 4, ..Default::default() },
        t_seen: f64::INFINITY,
    };
    let mut s = StreamState::structural_only(cfg).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 1.0)).unwrap();
    let e = s.recent_neighbors(1, 1.0).next().unwrap();
    let raw = build_raw_message(e, 2.0, Process::Structural, s.aug_config(), &TimeEncodingConfig::default()).unwrap();
    assert_eq!(raw.len(), 4 + 100);
}

#[test]
fn probabilities_and_determinism() {
    let s = toy_state(8, 3);
    let m = SlimModel::new(small_cfg(8), Process::Structural, 8, 2, 3, 1).unwrap();
    let p = m.predict(&s, 1, 5.0).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9 && p.iter().all(|&v| v >= 0.0));
    assert_eq!(p, m.predict(&s, 1, 5.0).unwrap());
    // never-seen node answers from zero features
    let q = m.predict(&s, 999, 5.0).unwrap();
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(m.predict(&s, 1, 6.0).is_err());
}

#[test]
fn zero_skip_weight_ignores_ln2() {
    let s = toy_state(8, 3);
    let mut m = SlimModel::new(SlimConfig { skip_weight: 0.0, ..small_cfg(8) }, Process::Structural, 8, 2, 3, 2).unwrap();
    let before = m.predict(&s, 1, 5.0).unwrap();
    m.params.ln2.gain.mapv_inplace(|v| v * 3.0 + 1.0);
    m.params.ln2.bias.fill(5.0);
    assert_eq!(before, m.predict(&s, 1, 5.0).unwrap());
}

#[test]
fn single_neighbor_mean_equals_sum() {
    let cfg = StreamConfig {
        d_e: 0,
        k: 3,
        aug: AugConfig { d_v: 8, ..Default::default() },
        t_seen: f64::INFINITY,
    };
    let mut s = StreamState::structural_only(cfg).unwrap();
    s.ingest_edge(&TemporalEdge::new(1, 2, 1.0).with_weight(2.0)).unwrap();
    let m = SlimModel::new(small_cfg(8), Process::Structural, 8, 0, 2, 4).unwrap();
    let ctx = capture_context(&s, Process::Structural, 1, 1.0).unwrap();
    let input = m.stack(&[&ctx]).unwrap();
    let msg = m.params.mlp1.predict(input.raw.view()).unwrap() * 2.0;
    let h = m.representations(&[&ctx]).unwrap();
    // recompute h from the single message by hand
    let mut z = Array2::zeros((1, 16));
    z.slice_mut(s![0, ..8]).assign(&ndarray::ArrayView1::from(&ctx.own[..]));
    z.slice_mut(s![0, 8..]).assign(&msg.row(0));
    let ht = m.params.mlp2.predict(z.view()).unwrap();
    let expect = m.params.ln1.forward(ht.view()).unwrap().0 + m.params.ln2.forward(msg.view()).unwrap().0;
    for (a, b) in h.iter().zip(expect.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_roundtrip() {
    let m = SlimModel::new(small_cfg(8), Process::Joint, 4, 2, 3, 9).unwrap();
    let mut buf = Vec::new();
    m.save(&mut buf).unwrap();
    assert_eq!(SlimModel::load(&buf[..]).unwrap(), m);
}

#[test]
fn early_stopping_with_constant_metric() {
    let s = toy_state(8, 3);
    let ctx = capture_context(&s, Process::Structural, 1, 5.0).unwrap();
    let mut m = SlimModel::new(small_cfg(8), Process::Structural, 8, 2, 2, 5).unwrap();
    let cfg = TrainConfig { max_epochs: 20, patience: 2, ..Default::default() };
    // one query of a single class: validation accuracy is constant
    let hist = train(
        &mut m,
        &[ctx.clone()],
        &[Target::Class(1)],
        std::slice::from_ref(&ctx),
        &[Target::Class(1)],
        TaskKind::Classification,
        &cfg,
    )
    .unwrap();
    assert!(hist.stopped_early);
    assert!(hist.epochs.len() <= 3, "ran {} epochs", hist.epochs.len());
}
