use splash::nn::*;
use ndarray::array;
use ndarray::{Array1, Array2};
use rand::Rng;
use splash::rng::{self, SplashRng};
use splash::SplashError;

fn rng(seed: u64) -> SplashRng {
    rng::seeded(seed, 1)
}

fn random_matrix(r: &mut SplashRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

#[test]
fn identity_mlp_passes_input_through() {
    let mlp = Mlp::from_layers(vec![Dense {
        weight: Array2::eye(3),
        bias: Array1::zeros(3),
    }]);
    let x = array![[1.0, -2.0, 3.0]];
    assert_eq!(mlp.predict(x.view()).unwrap(), x);
}

#[test]
fn zero_weights_give_bias() {
    let mut mlp = Mlp::new(&[3, 4, 2], &mut rng(0));
    for l in &mut mlp.layers {
        l.weight.fill(0.0);
    }
    mlp.layers[1].bias = array![0.5, -1.5];
    let out = mlp.predict(array![[1.0, 2.0, 3.0]].view()).unwrap();
    assert_eq!(out, array![[0.5, -1.5]]);
}

#[test]
fn eval_mode_is_deterministic_and_checks_shape() {
    let mlp = Mlp::new(&[4, 8, 3], &mut rng(1));
    let x = random_matrix(&mut rng(2), 5, 4);
    assert_eq!(mlp.predict(x.view()).unwrap(), mlp.predict(x.view()).unwrap());
    assert!(matches!(
        mlp.predict(random_matrix(&mut rng(2), 5, 3).view()),
        Err(SplashError::Shape(_))
    ));
}

fn mlp_loss(mlp: &Mlp, x: &Array2<f64>, proj: &Array2<f64>) -> f64 {
    (mlp.predict(x.view()).unwrap() * proj).sum()
}

#[test]
fn mlp_backward_matches_finite_differences() {
    for seed in 0..3 {
        let mut r = rng(10 + seed);
        let mlp = Mlp::new(&[5, 7, 6, 4], &mut r);
        let x = random_matrix(&mut r, 6, 5);
        let proj = random_matrix(&mut r, 6, 4);
        let (_, cache) = mlp.forward(x.view(), None).unwrap();
        let (grads, gx) = mlp.backward(&cache, proj.view()).unwrap();

        let err = grad_check(
            |flat| {
                let mut m = mlp.clone();
                m.assign_flat(flat).unwrap();
                mlp_loss(&m, &x, &proj)
            },
            &mlp.flatten(),
            &grads.flatten(),
            1e-5,
            200,
            seed,
        );
        assert!(err < 1e-4, "param grad error {err}");

        let err = grad_check(
            |flat| {
                let xi = Array2::from_shape_vec(x.raw_dim(), flat.to_vec()).unwrap();
                mlp_loss(&mlp, &xi, &proj)
            },
            x.as_slice().unwrap(),
            gx.as_slice().unwrap(),
            1e-5,
            200,
            seed,
        );
        assert!(err < 1e-4, "input grad error {err}");
    }
}

#[test]
fn backward_is_linear_and_zero_on_zero() {
    let mut r = rng(3);
    let mlp = Mlp::new(&[3, 5, 2], &mut r);
    let x = random_matrix(&mut r, 4, 3);
    let g = random_matrix(&mut r, 4, 2);
    let (_, cache) = mlp.forward(x.view(), None).unwrap();
    let (zero, gx0) = mlp.backward(&cache, Array2::zeros((4, 2)).view()).unwrap();
    assert!(zero.flatten().iter().all(|&v| v == 0.0));
    assert!(gx0.iter().all(|&v| v == 0.0));
    let (g1, _) = mlp.backward(&cache, g.view()).unwrap();
    let (g2, _) = mlp.backward(&cache, (&g * 2.0).view()).unwrap();
    for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut r = rng(4);
    let mut mlp = Mlp::new(&[3, 4, 2], &mut r);
    let x = random_matrix(&mut r, 2, 3);
    let (_, cache) = mlp.forward(x.view(), None).unwrap();
    let grads = mlp.zeros_like();
    AdamState::new(AdamConfig::default()).step(&mut mlp, &grads).unwrap();
    assert!(matches!(
        mlp.backward(&cache, Array2::zeros((2, 2)).view()),
        Err(SplashError::Contract(_))
    ));
}

#[test]
fn dropout_masks_are_inverted_and_replayable() {
    let mut r = rng(5);
    let mlp = Mlp::new(&[4, 64, 3], &mut r);
    let x = random_matrix(&mut r, 3, 4);
    let run = |seed| {
        let mut dr = rng(seed);
        mlp.forward(x.view(), Some(Dropout { rate: 0.2, rng: &mut dr })).unwrap()
    };
    let (a, cache) = run(9);
    let (b, _) = run(9);
    assert_eq!(a, b);
    let mask = cache.dropout_mask(0).unwrap();
    assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-12));
    let dropped = mask.iter().filter(|&&m| m == 0.0).count() as f64 / mask.len() as f64;
    assert!((dropped - 0.2).abs() < 0.1);

    // gradients respect the mask
    let g = random_matrix(&mut r, 3, 3);
    let (grads, _) = mlp.backward(&cache, g.view()).unwrap();
    let err = grad_check(
        |flat| {
            let mut m = mlp.clone();
            m.assign_flat(flat).unwrap();
            let mut dr = rng(9);
            let out = m.forward(x.view(), Some(Dropout { rate: 0.2, rng: &mut dr })).unwrap().0;
            (out * &g).sum()
        },
        &mlp.flatten(),
        &grads.flatten(),
        1e-5,
        150,
        1,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn layer_norm_normalizes() {
    let ln = LayerNorm::new(4);
    let (y, _) = ln.forward(array![[3.0, 3.0, 3.0, 3.0]].view()).unwrap();
    assert!(y.iter().all(|v| v.abs() < 1e-12));
    let x = random_matrix(&mut rng(6), 5, 16);
    let (y, _) = LayerNorm::new(16).forward(x.view()).unwrap();
    for row in y.rows() {
        let mean = row.sum() / 16.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn layer_norm_backward_matches_finite_differences() {
    let mut r = rng(7);
    let mut ln = LayerNorm::new(6);
    ln.gain = Array1::from_shape_simple_fn(6, || r.random_range(0.5..1.5));
    ln.bias = Array1::from_shape_simple_fn(6, || r.random_range(-0.5..0.5));
    let x = random_matrix(&mut r, 4, 6);
    let proj = random_matrix(&mut r, 4, 6);
    let (_, cache) = ln.forward(x.view()).unwrap();
    let (gp, gx) = ln.backward(&cache, proj.view());
    let err = grad_check(
        |flat| {
            let mut l = ln.clone();
            l.assign_flat(flat).unwrap();
            (l.forward(x.view()).unwrap().0 * &proj).sum()
        },
        &ln.flatten(),
        &gp.flatten(),
        1e-5,
        100,
        0,
    );
    assert!(err < 1e-4, "{err}");
    let err = grad_check(
        |flat| {
            let xi = Array2::from_shape_vec(x.raw_dim(), flat.to_vec()).unwrap();
            (ln.forward(xi.view()).unwrap().0 * &proj).sum()
        },
        x.as_slice().unwrap(),
        gx.as_slice().unwrap(),
        1e-5,
        100,
        0,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn adam_first_step_is_signed_lr() {
    let mut ln = LayerNorm::new(3);
    let before = ln.flatten();
    let mut g = ln.zeros_like();
    g.gain = array![0.3, -2.0, 5.0];
    g.bias = array![-0.01, 0.01, 1.0];
    let mut opt = AdamState::new(AdamConfig { weight_decay: 0.0, ..Default::default() });
    opt.step(&mut ln, &g).unwrap();
    for ((a, b), gv) in ln.flatten().iter().zip(before).zip(g.flatten()) {
        assert!((a - b + 1e-3 * gv.signum()).abs() < 1e-8);
    }
}

#[test]
fn adam_zero_gradient_no_decay_is_noop() {
    let mut mlp = Mlp::new(&[3, 3], &mut rng(8));
    let before = mlp.flatten();
    let g = mlp.zeros_like();
    let mut opt = AdamState::new(AdamConfig { weight_decay: 0.0, ..Default::default() });
    for _ in 0..5 {
        opt.step(&mut mlp, &g).unwrap();
    }
    assert_eq!(mlp.flatten(), before);
}

#[test]
fn adam_descends_quadratic_bowl() {
    let mut ln = LayerNorm::new(5);
    ln.gain = array![1.0, -2.0, 0.5, 3.0, -1.0];
    let mut opt = AdamState::new(AdamConfig { learning_rate: 0.05, weight_decay: 0.0, ..Default::default() });
    let loss = |l: &LayerNorm| l.flatten().iter().map(|x| x * x).sum::<f64>();
    let mut prev = loss(&ln);
    for _ in 0..100 {
        let mut g = ln.clone();
        g.scale(2.0);
        opt.step(&mut ln, &g).unwrap();
        let cur = loss(&ln);
        assert!(cur < prev);
        prev = cur;
    }
}

#[test]
fn adam_rejects_non_finite() {
    let mut ln = LayerNorm::new(2);
    let mut g = ln.zeros_like();
    g.gain[0] = f64::NAN;
    assert!(matches!(
        AdamState::new(AdamConfig::default()).step(&mut ln, &g),
        Err(SplashError::Divergence { .. })
    ));
}

#[test]
fn cross_entropy_values() {
    let (l, _) = cross_entropy(&[0.0; 5], &Target::Class(2));
    assert!((l - 5f64.ln()).abs() < 1e-12);
    let (l, _) = cross_entropy(&[50.0, 0.0, 0.0], &Target::Class(0));
    assert!(l < 1e-10);
    let (l, g) = cross_entropy(&[1e4, -1e4, 0.0], &Target::Class(1));
    assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));

    let logits = [0.3, -1.2, 2.0, 0.1];
    let target = vec![0.1, 0.4, 0.2, 0.3];
    let (l, g) = cross_entropy(&logits, &Target::Soft(target.clone()));
    let z: f64 = logits.iter().map(|v| f64::exp(*v)).sum();
    let direct: f64 = logits.iter().zip(&target).map(|(v, t)| -t * (v.exp() / z).ln()).sum();
    assert!((l - direct).abs() < 1e-10);
    for c in 0..4 {
        assert!((g[c] - (logits[c].exp() / z - target[c])).abs() < 1e-12);
    }
}

#[test]
fn grad_check_sensitivity() {
    // f(x) = x^T A x with symmetric A
    let a = array![[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 3.0]];
    let f = |x: &[f64]| {
        let v = Array1::from(x.to_vec());
        v.dot(&a.dot(&v))
    };
    let x = [0.3, -0.7, 1.1];
    let grad = (a.dot(&Array1::from(x.to_vec())) * 2.0).to_vec();
    assert!(grad_check(f, &x, &grad, 1e-5, 100, 0) < 1e-8);
    let bad: Vec<f64> = grad.iter().map(|g| g * 1.01).collect();
    assert!(grad_check(f, &x, &bad, 1e-5, 100, 0) > 1e-3);
}

#[test]
fn checkpoint_roundtrip() {
    let mlp = Mlp::new(&[3, 4, 2], &mut rng(11));
    let ln = LayerNorm::new(4);
    let mut tensors = mlp.to_named("mlp");
    tensors.extend(ln.to_named("ln"));
    let meta = serde_json::json!({"kind": "test"});
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &meta, &tensors).unwrap();
    let (m, back) = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(m, meta);
    assert_eq!(Mlp::from_named("mlp", &back).unwrap(), mlp);
    assert_eq!(LayerNorm::from_named("ln", &back).unwrap(), ln);
    assert!(read_checkpoint(&b"garbage!garbage!"[..]).is_err());
}
