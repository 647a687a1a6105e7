//! Dense network primitives with hand-written reverse-mode gradients.
//!
//! Batches are row-major: one sample per row. Weight matrices are stored as
//! `fan_in x fan_out` so a layer computes `x . W + b`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplashError};
use crate::rng::{self, SplashRng};

/// A training target: a class index or a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Soft(Vec<f64>),
}

impl Target {
    pub fn weight(&self, c: usize) -> f64 {
        match self {
            Target::Class(k) => f64::from(u8::from(*k == c)),
            Target::Soft(v) => v.get(c).copied().unwrap_or(0.0),
        }
    }

    /// Index of the largest target mass.
    pub fn argmax(&self) -> usize {
        match self {
            Target::Class(k) => *k,
            Target::Soft(v) => argmax(v),
        }
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// A view of one parameter tensor for optimizers and serialization.
pub struct TensorMut<'a> {
    pub data: &'a mut [f64],
    /// Whether weight decay applies (weight matrices only).
    pub decay: bool,
}

/// Anything exposing its parameters as flat tensors in a fixed order.
/// Gradients use the same type as the parameters they belong to.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(SplashError::Shape(format!(
                "flat vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.data.iter_mut().zip(s).for_each(|(d, x)| *d += x);
        }
    }
}

fn slice_of<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice_of_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut SplashRng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight);
        z += &self.bias;
        z
    }
}

/// Rectifier MLP; identity on the output layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    generation: u64,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of every layer (after activation and dropout of the previous).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre_acts: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers for hidden layers, when training.
    masks: Vec<Option<Array2<f64>>>,
    generation: u64,
    fingerprint: usize,
}

impl MlpCache {
    /// Inverted-dropout multipliers applied after hidden layer `layer`.
    pub fn dropout_mask(&self, layer: usize) -> Option<&Array2<f64>> {
        self.masks.get(layer)?.as_ref()
    }
}

/// Dropout applied to hidden activations in training mode.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SplashRng,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new(dims: &[usize], rng: &mut SplashRng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        Self::from_layers(dims.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect())
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        Self { layers, generation: 0 }
    }

    pub fn zeros_like(&self) -> Self {
        Self::from_layers(
            self.layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    fn fingerprint(&self) -> usize {
        self.layers.iter().fold(self.layers.len(), |acc, l| {
            acc.wrapping_mul(31).wrapping_add(l.fan_in() * 7919 + l.fan_out())
        })
    }

    pub fn forward(&self, x: ArrayView2<f64>, dropout: Option<Dropout<'_>>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(SplashError::Shape(format!(
                "MLP input has {} columns, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut dropout = dropout.filter(|d| d.rate > 0.0);
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h.view());
            inputs.push(h);
            if l == last {
                h = z;
                break;
            }
            let mut a = z.mapv(|v| v.max(0.0));
            let mask = dropout.as_mut().map(|d| {
                let keep = 1.0 - d.rate;
                Array2::from_shape_simple_fn(a.raw_dim(), || {
                    if d.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }
                })
            });
            if let Some(m) = &mask {
                a *= m;
            }
            pre_acts.push(z);
            masks.push(mask);
            h = a;
        }
        let cache = MlpCache {
            inputs,
            pre_acts,
            masks,
            generation: self.generation,
            fingerprint: self.fingerprint(),
        };
        Ok((h, cache))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, None)?.0)
    }

    /// Returns parameter gradients (as an `Mlp`) and the input gradient.
    pub fn backward(&self, cache: &MlpCache, grad_output: ArrayView2<f64>) -> Result<(Mlp, Array2<f64>)> {
        if cache.generation != self.generation || cache.fingerprint != self.fingerprint() {
            return Err(SplashError::Contract(
                "MLP cache does not belong to the current parameters".into(),
            ));
        }
        if grad_output.ncols() != self.output_dim() || grad_output.nrows() != cache.inputs[0].nrows() {
            return Err(SplashError::Shape("gradient does not match forward output".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                if let Some(m) = &cache.masks[l] {
                    g *= m;
                }
                Zip::from(&mut g)
                    .and(&cache.pre_acts[l])
                    .for_each(|gv, &z| if z <= 0.0 { *gv = 0.0 });
            }
            let layer = &self.layers[l];
            let dw = cache.inputs[l].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            let g_in = g.dot(&layer.weight.t());
            grads.push(Dense { weight: dw, bias: db });
            g = g_in;
        }
        grads.reverse();
        Ok((Mlp::from_layers(grads), g))
    }
}

impl Parameterized for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [slice_of(&l.weight), slice_of(&l.bias)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    TensorMut { data: slice_of_mut(&mut l.weight), decay: true },
                    TensorMut { data: slice_of_mut(&mut l.bias), decay: false },
                ]
            })
            .collect()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gain: Array1::zeros(self.gain.len()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, LayerNormCache)> {
        if x.ncols() != self.dim() {
            return Err(SplashError::Shape(format!(
                "layer norm input has {} columns, expected {}",
                x.ncols(),
                self.dim()
            )));
        }
        let n = x.ncols() as f64;
        let mut normalized = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row *= *s;
        }
        let y = &normalized * &self.gain + &self.bias;
        Ok((y, LayerNormCache { normalized, inv_std }))
    }

    /// Returns `(param grads, input grad)`.
    pub fn backward(&self, cache: &LayerNormCache, grad_output: ArrayView2<f64>) -> (LayerNorm, Array2<f64>) {
        let n = self.dim() as f64;
        let dgain = (&grad_output * &cache.normalized).sum_axis(Axis(0));
        let dbias = grad_output.sum_axis(Axis(0));
        let dxhat = &grad_output * &self.gain;
        let mut dx = Array2::zeros(grad_output.raw_dim());
        for (((mut out, g), xh), &s) in dx
            .rows_mut()
            .into_iter()
            .zip(dxhat.rows())
            .zip(cache.normalized.rows())
            .zip(cache.inv_std.iter())
        {
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            Zip::from(&mut out)
                .and(&g)
                .and(&xh)
                .for_each(|o, &gv, &xv| *o = s / n * (n * gv - sum_g - xv * sum_gx));
        }
        (LayerNorm { gain: dgain, bias: dbias }, dx)
    }
}

impl Parameterized for LayerNorm {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice_of(&self.gain), slice_of(&self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        vec![
            TensorMut { data: slice_of_mut(&mut self.gain), decay: false },
            TensorMut { data: slice_of_mut(&mut self.bias), decay: false },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient of weight matrices.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        if grads.iter().flat_map(|g| g.iter()).any(|g| !g.is_finite()) {
            return Err(SplashError::Divergence {
                epoch: 0,
                msg: format!("non-finite gradient at optimizer step {}", self.step + 1),
            });
        }
        let mut tensors = params.tensors_mut();
        if self.m.is_empty() {
            self.m = tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
            self.v = self.m.clone();
        }
        if tensors.len() != self.m.len() || tensors.len() != grads.len() {
            return Err(SplashError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((t, g), m), v) in tensors.iter_mut().zip(&grads).zip(&mut self.m).zip(&mut self.v) {
            if t.data.len() != g.len() {
                return Err(SplashError::Shape("gradient shape mismatch".into()));
            }
            let decay = if t.decay { weight_decay } else { 0.0 };
            for i in 0..g.len() {
                let gi = g[i] + decay * t.data[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                t.data[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Max-shifted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `-sum target * log softmax(logits)` and its logit gradient
/// `softmax - target`.
pub fn cross_entropy(logits: &[f64], target: &Target) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let mut loss = 0.0;
    let grad = logp
        .iter()
        .enumerate()
        .map(|(c, &lp)| {
            let t = target.weight(c);
            if t != 0.0 {
                loss -= t * lp;
            }
            lp.exp() - t
        })
        .collect();
    (loss, grad)
}

/// Mean cross-entropy over rows and its gradient w.r.t. the logits.
pub fn batch_cross_entropy(logits: &Array2<f64>, targets: &[Target]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != targets.len() {
        return Err(SplashError::Shape(format!(
            "{} logit rows vs {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    let n = targets.len().max(1) as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (mut g, t) in grad.rows_mut().into_iter().zip(targets) {
        let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut wz, mut wsum) = (0.0, 0.0, 0.0);
        for (c, z) in g.iter_mut().enumerate() {
            let w = t.weight(c);
            if w != 0.0 {
                wz += w * (*z - max);
                wsum += w;
            }
            *z = (*z - max).exp();
            sum += *z;
        }
        total -= wz - wsum * sum.ln();
        for (c, z) in g.iter_mut().enumerate() {
            *z = (*z / sum - t.weight(c)) / n;
        }
    }
    Ok((total / n, grad))
}

/// Largest relative error between `analytic` and central differences of `f`
/// over up to `max_coords` sampled coordinates (all when fewer exist).
///
/// Relative error is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64, max_coords: usize, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let coords: Vec<usize> = if params.len() <= max_coords {
        (0..params.len()).collect()
    } else {
        let mut r = rng::seeded(seed, 0x6772_6164);
        rand::seq::index::sample(&mut r, params.len(), max_coords).into_vec()
    };
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SPLASHCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A named, shaped, row-major tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    meta: serde_json::Value,
    tensors: Vec<NamedTensor>,
}

/// Writes `magic | u32 version | u64 header length | JSON header | f64 LE data`.
pub fn write_checkpoint<W: Write>(mut out: W, meta: &serde_json::Value, tensors: &[NamedTensor]) -> Result<()> {
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(SplashError::Shape(format!("tensor {} shape does not match data", t.name)));
        }
    }
    let header = serde_json::to_vec(&CheckpointHeader {
        version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        tensors: tensors.to_vec(),
    })?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for t in tensors {
        for x in &t.data {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(serde_json::Value, Vec<NamedTensor>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(SplashError::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(SplashError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;
    let mut tensors = header.tensors;
    let mut buf = [0u8; 8];
    for t in &mut tensors {
        let n: usize = t.shape.iter().product();
        t.data = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            t.data.push(f64::from_le_bytes(buf));
        }
    }
    Ok((header.meta, tensors))
}

impl Mlp {
    pub fn to_named(&self, prefix: &str) -> Vec<NamedTensor> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    NamedTensor {
                        name: format!("{prefix}.{i}.weight"),
                        shape: vec![l.fan_in(), l.fan_out()],
                        data: slice_of(&l.weight).to_vec(),
                    },
                    NamedTensor {
                        name: format!("{prefix}.{i}.bias"),
                        shape: vec![l.fan_out()],
                        data: slice_of(&l.bias).to_vec(),
                    },
                ]
            })
            .collect()
    }

    /// Rebuilds an MLP from consecutive `prefix.i.weight` / `prefix.i.bias` tensors.
    pub fn from_named(prefix: &str, tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: String| tensors.iter().find(|t| t.name == name);
        let mut layers = Vec::new();
        while let (Some(w), Some(b)) = (
            find(format!("{prefix}.{}.weight", layers.len())),
            find(format!("{prefix}.{}.bias", layers.len())),
        ) {
            let (rows, cols) = match w.shape[..] {
                [r, c] => (r, c),
                _ => return Err(SplashError::Format(format!("{} is not a matrix", w.name))),
            };
            if b.shape != [cols] {
                return Err(SplashError::Format(format!("{} has the wrong shape", b.name)));
            }
            layers.push(Dense {
                weight: Array2::from_shape_vec((rows, cols), w.data.clone())
                    .map_err(|e| SplashError::Format(e.to_string()))?,
                bias: Array1::from(b.data.clone()),
            });
        }
        if layers.is_empty() {
            return Err(SplashError::Format(format!("no layers named {prefix}.*")));
        }
        Ok(Mlp::from_layers(layers))
    }
}

impl LayerNorm {
    pub fn to_named(&self, prefix: &str) -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: format!("{prefix}.gain"),
                shape: vec![self.dim()],
                data: self.gain.to_vec(),
            },
            NamedTensor {
                name: format!("{prefix}.bias"),
                shape: vec![self.dim()],
                data: self.bias.to_vec(),
            },
        ]
    }

    pub fn from_named(prefix: &str, tensors: &[NamedTensor]) -> Result<Self> {
        let get = |suffix: &str| {
            tensors
                .iter()
                .find(|t| t.name == format!("{prefix}.{suffix}"))
                .ok_or_else(|| SplashError::Format(format!("missing tensor {prefix}.{suffix}")))
        };
        let (g, b) = (get("gain")?, get("bias")?);
        if g.data.len() != b.data.len() {
            return Err(SplashError::Format(format!("{prefix} gain/bias lengths differ")));
        }
        Ok(LayerNorm {
            gain: Array1::from(g.data.clone()),
            bias: Array1::from(b.data.clone()),
        })
    }
}
