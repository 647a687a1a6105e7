//! SLIM forward pass against a loop-based reference implementation.

use rand::Rng;

use splash::features::init_random_features;
use splash::nn::{Dense, LayerNorm, Mlp};
use splash::slim::{capture_context, QueryContext, SlimConfig, SlimModel, TimeEncodingConfig};
use splash::{rng, AugConfig, Process, StreamConfig, StreamState, TemporalEdge};

fn dense(layer: &Dense, x: &[f64]) -> Vec<f64> {
    (0..layer.fan_out())
        .map(|j| layer.bias[j] + (0..layer.fan_in()).map(|i| x[i] * layer.weight[[i, j]]).sum::<f64>())
        .collect()
}

fn mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, layer) in m.layers.iter().enumerate() {
        h = dense(layer, &h);
        if l + 1 < m.layers.len() {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    h
}

fn layer_norm(ln: &LayerNorm, x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * ln.gain[i] + ln.bias[i])
        .collect()
}

fn reference_logits(model: &SlimModel, ctx: &QueryContext) -> Vec<f64> {
    let p = &model.params;
    let d_h = model.cfg.d_h;
    let t = model.cfg.time;
    let mut sum = vec![0.0; d_h];
    for i in 0..ctx.len() {
        let mut raw: Vec<f64> = ctx.neighbor_features.row(i).to_vec();
        raw.extend(ctx.edge_features.row(i).iter());
        raw.extend((0..t.d_t).map(|n| (ctx.deltas[i] * t.alpha.powf(-(n as f64) / t.beta)).cos()));
        for (s, m) in sum.iter_mut().zip(mlp(&p.mlp1, &raw)) {
            *s += ctx.weights[i] * m;
        }
    }
    let count = ctx.len().max(1) as f64;
    let mut z = ctx.own.clone();
    z.extend(sum.iter().map(|s| s / count));
    let mut h = layer_norm(&p.ln1, &mlp(&p.mlp2, &z));
    if model.cfg.skip_weight != 0.0 {
        for (a, b) in h.iter_mut().zip(layer_norm(&p.ln2, &sum)) {
            *a += model.cfg.skip_weight * b;
        }
    }
    mlp(&p.decoder, &h)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn random_stream(seed: u64, d_v: usize, d_e: usize, k: usize) -> StreamState {
    let mut r = rng::seeded(seed, 11);
    let aug = AugConfig {
        d_v,
        rng_seed: seed,
        ..Default::default()
    };
    let cfg = StreamConfig {
        d_e,
        k,
        aug,
        t_seen: 0.0,
    };
    let mut state = StreamState::new(cfg, 0..6u64, [init_random_features(0..6u64, &aug)]).unwrap();
    let mut t = 0.0;
    for _ in 0..40 {
        t += r.random_range(0.0..5.0);
        let e = TemporalEdge::new(r.random_range(0..10), r.random_range(0..10), t)
            .with_weight(r.random_range(0.1..3.0))
            .with_features((0..d_e).map(|_| r.random_range(-1.0..1.0)).collect());
        state.ingest_edge(&e).unwrap();
    }
    state
}

fn model(process: Process, skip_weight: f64, d_e: usize, seed: u64) -> SlimModel {
    let cfg = SlimConfig {
        d_h: 12,
        skip_weight,
        time: TimeEncodingConfig {
            d_t: 6,
            ..Default::default()
        },
        ..Default::default()
    };
    SlimModel::new(cfg, process, 4, d_e, 5, seed).unwrap()
}

#[test]
fn predictions_match_reference() {
    for seed in 0..4 {
        let state = random_stream(seed, 4, 3, 5);
        for (process, skip) in [
            (Process::Random, 1.0),
            (Process::Structural, 0.0),
            (Process::Zero, 0.5),
        ] {
            let m = model(process, skip, 3, seed);
            for node in 0..12u64 {
                let ctx = capture_context(&state, process, node, state.current_time()).unwrap();
                let want = softmax(&reference_logits(&m, &ctx));
                let got = m.predict_context(&ctx).unwrap();
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "seed {seed} {process} node {node}: {got:?} vs {want:?}");
                }
            }
        }
    }
}

#[test]
fn batched_representations_match_single_queries() {
    let state = random_stream(9, 4, 0, 4);
    let m = model(Process::Random, 1.0, 0, 9);
    let ctxs: Vec<QueryContext> = (0..10u64)
        .map(|n| capture_context(&state, Process::Random, n, state.current_time()).unwrap())
        .collect();
    let refs: Vec<&QueryContext> = ctxs.iter().collect();
    let batch = m.representations(&refs).unwrap();
    for (i, c) in refs.iter().enumerate() {
        let single = m.representations(&[*c]).unwrap();
        for (a, b) in batch.row(i).iter().zip(single.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn context_respects_query_time() {
    let state = random_stream(2, 4, 0, 50);
    let t_mid = state.current_time() / 2.0;
    for node in 0..10u64 {
        let ctx = capture_context(&state, Process::Random, node, t_mid).unwrap();
        assert!(ctx.deltas.iter().all(|&d| d >= 0.0));
    }
}
