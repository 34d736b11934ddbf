//! Differentiable forecasters trained on the quadratic loss.
//!
//! * [`MlpModel`]: TF-IDF vector → ReLU dense layers → sigmoid.
//! * [`GruModel`]: word ids → embedding → batch normalization → GRU (final
//!   hidden state) → ReLU dense layers → sigmoid.
//!
//! All parameters of a model live in one flat `f64` vector described by a
//! [`Layout`], so optimizers, checkpoints and the finite-difference gradient
//! check treat every model the same way.
//!
//! Id 0 marks padding or an unknown word. Such steps are skipped by the
//! recurrence and excluded from the batch-normalization statistics, which
//! makes predictions independent of the padded length.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running average in batch-norm updates.
pub const BN_MOMENTUM: f64 = 0.9;
pub const EMBEDDING_INIT: f64 = 0.05;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W·x + b` with `W` row-major `out.len() × x.len()`.
#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o = b[i] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// `out += W·x`.
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// `dx += Wᵀ·dy`.
#[inline]
fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (i, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        dx.iter_mut().zip(row).for_each(|(d, a)| *d += g * a);
    }
}

/// `dW += dy·xᵀ`.
#[inline]
fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[i * cols..(i + 1) * cols];
        row.iter_mut().zip(x).for_each(|(d, v)| *d += g * v);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named, shaped slices of a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.total();
        self.blocks.push(Block {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        offset
    }

    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Offsets of one dense layer inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Dense {
    w: usize,
    b: usize,
    input: usize,
    output: usize,
}

/// ReLU hidden layers followed by a one-unit sigmoid output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DenseStack {
    layers: Vec<Dense>,
    /// Dropout on the stack's own input (after the GRU) as well as after
    /// each hidden layer.
    input_dropout: bool,
}

impl DenseStack {
    fn new(layout: &mut Layout, prefix: &str, input: usize, hidden: &[usize], input_dropout: bool) -> Self {
        let mut layers = Vec::new();
        let mut fan_in = input;
        for (i, &width) in hidden.iter().chain(std::iter::once(&1)).enumerate() {
            let last = i == hidden.len();
            let name = if last { format!("{prefix}out") } else { format!("{prefix}dense{i}") };
            let w = layout.push(format!("{name}.w"), width, fan_in);
            let b = layout.push(format!("{name}.b"), width, 1);
            layers.push(Dense {
                w,
                b,
                input: fan_in,
                output: width,
            });
            fan_in = width;
        }
        DenseStack {
            layers,
            input_dropout,
        }
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        for l in &self.layers {
            glorot(&mut params[l.w..l.w + l.input * l.output], l.input, l.output, rng);
        }
    }
}

struct DenseCache {
    /// Input to each layer (after dropout).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers applied to each layer input (empty if none).
    masks: Vec<Vec<f64>>,
    output: f64,
}

fn dropout_mask(len: usize, dropout: &mut Option<(f64, &mut ChaCha8Rng)>) -> Vec<f64> {
    match dropout {
        Some((p, rng)) if *p > 0.0 => {
            let keep = 1.0 / (1.0 - *p);
            (0..len)
                .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn dense_forward(
    stack: &DenseStack,
    params: &[f64],
    input: Vec<f64>,
    dropout: &mut Option<(f64, &mut ChaCha8Rng)>,
) -> DenseCache {
    let n = stack.layers.len();
    let mut cache = DenseCache {
        inputs: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
        output: 0.0,
    };
    let mut x = input;
    for (i, l) in stack.layers.iter().enumerate() {
        let mask = if i > 0 || stack.input_dropout {
            dropout_mask(x.len(), dropout)
        } else {
            Vec::new()
        };
        if !mask.is_empty() {
            x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        let mut a = vec![0.0; l.output];
        affine(&params[l.w..l.w + l.input * l.output], &params[l.b..l.b + l.output], &x, &mut a);
        cache.inputs.push(std::mem::take(&mut x));
        cache.masks.push(mask);
        if i + 1 == n {
            cache.output = sigmoid(a[0]);
        } else {
            x = a.iter().map(|v| v.max(0.0)).collect();
        }
        cache.pre.push(a);
    }
    cache
}

/// Backpropagates `d_output` (gradient w.r.t. the sigmoid output) and
/// returns the gradient w.r.t. the stack input.
fn dense_backward(stack: &DenseStack, params: &[f64], grad: &mut [f64], cache: &DenseCache, d_output: f64) -> Vec<f64> {
    let y = cache.output;
    let mut da = vec![d_output * y * (1.0 - y)];
    let mut dx = Vec::new();
    for (i, l) in stack.layers.iter().enumerate().rev() {
        let x = &cache.inputs[i];
        outer_acc(&mut grad[l.w..l.w + l.input * l.output], &da, x);
        grad[l.b..l.b + l.output].iter_mut().zip(&da).for_each(|(g, d)| *g += d);
        dx = vec![0.0; l.input];
        matvec_t_acc(&params[l.w..l.w + l.input * l.output], &da, &mut dx);
        if !cache.masks[i].is_empty() {
            dx.iter_mut().zip(&cache.masks[i]).for_each(|(d, m)| *d *= m);
        }
        if i > 0 {
            let pre = &cache.pre[i - 1];
            da = dx.iter().zip(pre).map(|(d, a)| if *a > 0.0 { *d } else { 0.0 }).collect();
        }
    }
    dx
}

fn glorot(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    w.iter_mut().for_each(|v| *v = rng.random_range(-limit..=limit));
}

/// A model with a flat parameter vector and an analytic gradient of the
/// batch mean squared error.
pub trait Network: Clone + Send + Sync {
    type Sample: Sync;
    /// Side statistics gathered by a training-mode forward pass.
    type BatchState;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn layout(&self) -> &Layout;

    fn check_sample(&self, sample: &Self::Sample) -> Result<()>;

    /// Mean squared error over `batch` and its gradient, in training mode.
    /// `dropout` carries the drop probability and the mask generator.
    fn loss_grad(
        &self,
        batch: &[&Self::Sample],
        targets: &[f64],
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (f64, Vec<f64>, Self::BatchState);

    /// Folds the statistics of a training batch into the model state.
    fn absorb(&mut self, state: Self::BatchState);

    /// Inference-mode predictions in (0, 1).
    fn predict(&self, samples: &[&Self::Sample]) -> Result<Vec<f64>>;

    /// Parameter entries excluded from updates.
    fn frozen(&self) -> std::ops::Range<usize> {
        0..0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub arch: MlpArch,
    pub layout: Layout,
    pub params: Vec<f64>,
    stack: DenseStack,
}

impl MlpModel {
    pub fn new(arch: MlpArch, seed: u64) -> Self {
        let mut layout = Layout::default();
        let stack = DenseStack::new(&mut layout, "", arch.input, &arch.hidden, false);
        let mut params = vec![0.0; layout.total()];
        stack.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
        MlpModel {
            arch,
            layout,
            params,
            stack,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_sample(&x.to_vec())?;
        Ok(dense_forward(&self.stack, &self.params, x.to_vec(), &mut None).output)
    }
}

impl Network for MlpModel {
    type Sample = Vec<f64>;
    type BatchState = ();

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn check_sample(&self, sample: &Vec<f64>) -> Result<()> {
        if sample.len() != self.arch.input {
            return Err(Error::Shape {
                expected: self.arch.input,
                got: sample.len(),
            });
        }
        Ok(())
    }

    fn loss_grad(
        &self,
        batch: &[&Vec<f64>],
        targets: &[f64],
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (f64, Vec<f64>, ()) {
        let mut grad = vec![0.0; self.params.len()];
        let m = batch.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in batch.iter().zip(targets) {
            let cache = dense_forward(&self.stack, &self.params, (*x).clone(), &mut dropout);
            let err = cache.output - y;
            loss += err * err / m;
            dense_backward(&self.stack, &self.params, &mut grad, &cache, 2.0 * err / m);
        }
        (loss, grad, ())
    }

    fn absorb(&mut self, _: ()) {}

    fn predict(&self, samples: &[&Vec<f64>]) -> Result<Vec<f64>> {
        samples.iter().map(|x| self.forward(x)).collect()
    }
}

/// Running per-feature statistics for inference-mode normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub updates: usize,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            updates: 0,
        }
    }

    pub fn update(&mut self, mean: &[f64], var: &[f64]) {
        if self.updates == 0 {
            self.running_mean.copy_from_slice(mean);
            self.running_var.copy_from_slice(var);
        } else {
            for j in 0..mean.len() {
                self.running_mean[j] = BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                self.running_var[j] = BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
            }
        }
        self.updates += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Inference,
}

/// Per-feature mean and population variance of a set of vectors.
pub fn batch_stats(x: &[&[f64]], features: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mut mean = vec![0.0; features];
    for v in x {
        mean.iter_mut().zip(v.iter()).for_each(|(m, a)| *m += a);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; features];
    for v in x {
        var.iter_mut()
            .zip(v.iter().zip(&mean))
            .for_each(|(s, (a, m))| *s += (a - m) * (a - m));
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

/// `(x − mean)/√(var + ε)·γ + δ` per feature. Training mode uses the batch
/// statistics and folds them into `state`; inference mode reads the running
/// averages.
pub fn batch_norm(
    x: &[Vec<f64>],
    state: &mut BatchNormState,
    gamma: &[f64],
    delta: &[f64],
    mode: Mode,
) -> Result<Vec<Vec<f64>>> {
    let q = gamma.len();
    let (mean, var) = match mode {
        Mode::Training => {
            let views: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let (m, v) = batch_stats(&views, q);
            state.update(&m, &v);
            (m, v)
        }
        Mode::Inference => {
            if state.updates == 0 {
                return Err(Error::Stats);
            }
            (state.running_mean.clone(), state.running_var.clone())
        }
    };
    Ok(x.iter()
        .map(|v| {
            (0..q)
                .map(|j| (v[j] - mean[j]) / (var[j] + BN_EPSILON).sqrt() * gamma[j] + delta[j])
                .collect()
        })
        .collect())
}

/// Borrowed GRU weights. Input matrices are `hidden × input`, recurrent ones
/// `hidden × hidden`, all row-major.
#[derive(Debug, Clone, Copy)]
pub struct GruCellParams<'a> {
    pub w_z: &'a [f64],
    pub w_r: &'a [f64],
    pub w_h: &'a [f64],
    pub u_z: &'a [f64],
    pub u_r: &'a [f64],
    pub u_h: &'a [f64],
    pub b_z: &'a [f64],
    pub b_r: &'a [f64],
    pub b_h: &'a [f64],
}

struct StepCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    rh: Vec<f64>,
}

fn gru_step(p: &GruCellParams, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, StepCache) {
    let hdim = h_prev.len();
    let mut az = vec![0.0; hdim];
    affine(p.w_z, p.b_z, x, &mut az);
    matvec_acc(p.u_z, h_prev, &mut az);
    let z: Vec<f64> = az.iter().map(|&a| sigmoid(a)).collect();

    let mut ar = vec![0.0; hdim];
    affine(p.w_r, p.b_r, x, &mut ar);
    matvec_acc(p.u_r, h_prev, &mut ar);
    let r: Vec<f64> = ar.iter().map(|&a| sigmoid(a)).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut ah = vec![0.0; hdim];
    affine(p.w_h, p.b_h, x, &mut ah);
    matvec_acc(p.u_h, &rh, &mut ah);
    let cand: Vec<f64> = ah.iter().map(|a| a.tanh()).collect();

    let h: Vec<f64> = (0..hdim)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
        .collect();
    (
        h,
        StepCache {
            h_prev: h_prev.to_vec(),
            z,
            r,
            cand,
            rh,
        },
    )
}

/// One GRU update:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &GruCellParams) -> Vec<f64> {
    gru_step(params, x, h_prev).0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruArch {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dense: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct GruOffsets {
    embedding: usize,
    gamma: usize,
    delta: usize,
    w_z: usize,
    w_r: usize,
    w_h: usize,
    u_z: usize,
    u_r: usize,
    u_h: usize,
    b_z: usize,
    b_r: usize,
    b_h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub arch: GruArch,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub batch_norm: BatchNormState,
    off: GruOffsets,
    stack: DenseStack,
}

/// Training-mode batch-norm statistics of one batch (`None` when the batch
/// had no word at all).
pub type GruBatchState = Option<(Vec<f64>, Vec<f64>)>;

impl GruModel {
    pub fn new(arch: GruArch, seed: u64) -> Self {
        let (v, q, h) = (arch.vocab_size, arch.embed_dim, arch.hidden);
        let mut layout = Layout::default();
        let embedding = layout.push("embedding", v + 1, q);
        let gamma = layout.push("bn.gamma", q, 1);
        let delta = layout.push("bn.delta", q, 1);
        let w_z = layout.push("gru.w_z", h, q);
        let w_r = layout.push("gru.w_r", h, q);
        let w_h = layout.push("gru.w_h", h, q);
        let u_z = layout.push("gru.u_z", h, h);
        let u_r = layout.push("gru.u_r", h, h);
        let u_h = layout.push("gru.u_h", h, h);
        let b_z = layout.push("gru.b_z", h, 1);
        let b_r = layout.push("gru.b_r", h, 1);
        let b_h = layout.push("gru.b_h", h, 1);
        let stack = DenseStack::new(&mut layout, "head.", h, &arch.dense, true);
        let off = GruOffsets {
            embedding,
            gamma,
            delta,
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        };

        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params[embedding + q..embedding + (v + 1) * q]
            .iter_mut()
            .for_each(|e| *e = rng.random_range(-EMBEDDING_INIT..=EMBEDDING_INIT));
        params[gamma..gamma + q].fill(1.0);
        for w in [w_z, w_r, w_h] {
            glorot(&mut params[w..w + h * q], q, h, &mut rng);
        }
        for u in [u_z, u_r, u_h] {
            glorot(&mut params[u..u + h * h], h, h, &mut rng);
        }
        stack.init(&mut params, &mut rng);
        GruModel {
            batch_norm: BatchNormState::new(q),
            arch,
            layout,
            params,
            off,
            stack,
        }
    }

    pub fn embedding(&self) -> &[f64] {
        let q = self.arch.embed_dim;
        &self.params[self.off.embedding..self.off.embedding + (self.arch.vocab_size + 1) * q]
    }

    /// Vector of word `id` (row 0 is the padding vector).
    pub fn word_vector(&self, id: usize) -> &[f64] {
        let q = self.arch.embed_dim;
        &self.embedding()[id * q..(id + 1) * q]
    }

    pub fn cell(&self) -> GruCellParams<'_> {
        let (q, h) = (self.arch.embed_dim, self.arch.hidden);
        let p = &self.params;
        let o = &self.off;
        GruCellParams {
            w_z: &p[o.w_z..o.w_z + h * q],
            w_r: &p[o.w_r..o.w_r + h * q],
            w_h: &p[o.w_h..o.w_h + h * q],
            u_z: &p[o.u_z..o.u_z + h * h],
            u_r: &p[o.u_r..o.u_r + h * h],
            u_h: &p[o.u_h..o.u_h + h * h],
            b_z: &p[o.b_z..o.b_z + h],
            b_r: &p[o.b_r..o.b_r + h],
            b_h: &p[o.b_h..o.b_h + h],
        }
    }

    fn gamma(&self) -> &[f64] {
        &self.params[self.off.gamma..self.off.gamma + self.arch.embed_dim]
    }

    fn delta(&self) -> &[f64] {
        &self.params[self.off.delta..self.off.delta + self.arch.embed_dim]
    }

    /// Runs the recurrence over normalized step inputs and returns the
    /// final hidden state with per-step caches.
    fn recur(&self, steps: &[Vec<f64>]) -> (Vec<f64>, Vec<StepCache>) {
        let cell = self.cell();
        let mut h = vec![0.0; self.arch.hidden];
        let mut caches = Vec::with_capacity(steps.len());
        for x in steps {
            let (next, cache) = gru_step(&cell, x, &h);
            caches.push(cache);
            h = next;
        }
        (h, caches)
    }

    fn normalize(&self, e: &[f64], mean: &[f64], var: &[f64]) -> Vec<f64> {
        let (gamma, delta) = (self.gamma(), self.delta());
        (0..e.len())
            .map(|j| (e[j] - mean[j]) / (var[j] + BN_EPSILON).sqrt() * gamma[j] + delta[j])
            .collect()
    }

    /// Prediction for one id sequence: training mode uses the statistics of
    /// this single sequence, inference mode the running ones.
    pub fn forward(&self, ids: &[u32], mode: Mode) -> Result<f64> {
        self.check_sample(&ids.to_vec())?;
        match mode {
            Mode::Inference => Ok(self.predict(&[&ids.to_vec()])?[0]),
            Mode::Training => Ok(self.predict_with_batch_stats(&[ids])[0]),
        }
    }

    /// Predictions with batch statistics of `batch` and no dropout.
    pub fn predict_with_batch_stats(&self, batch: &[&[u32]]) -> Vec<f64> {
        let q = self.arch.embed_dim;
        let words: Vec<&[f64]> = batch
            .iter()
            .flat_map(|ids| ids.iter().filter(|&&id| id != 0))
            .map(|&id| self.word_vector(id as usize))
            .collect();
        let (mean, var) = if words.is_empty() {
            (vec![0.0; q], vec![1.0; q])
        } else {
            batch_stats(&words, q)
        };
        batch
            .iter()
            .map(|ids| {
                let steps: Vec<Vec<f64>> = ids
                    .iter()
                    .filter(|&&id| id != 0)
                    .map(|&id| self.normalize(self.word_vector(id as usize), &mean, &var))
                    .collect();
                let (h, _) = self.recur(&steps);
                dense_forward(&self.stack, &self.params, h, &mut None).output
            })
            .collect()
    }
}

impl Network for GruModel {
    type Sample = Vec<u32>;
    type BatchState = GruBatchState;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn check_sample(&self, ids: &Vec<u32>) -> Result<()> {
        match ids.iter().find(|&&id| id as usize > self.arch.vocab_size) {
            Some(&bad) => Err(Error::Index {
                index: bad as usize,
                vocab_size: self.arch.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn frozen(&self) -> std::ops::Range<usize> {
        self.off.embedding..self.off.embedding + self.arch.embed_dim
    }

    fn loss_grad(
        &self,
        batch: &[&Vec<u32>],
        targets: &[f64],
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (f64, Vec<f64>, GruBatchState) {
        let (q, hdim) = (self.arch.embed_dim, self.arch.hidden);
        let o = self.off;
        let mut grad = vec![0.0; self.params.len()];
        let m = batch.len() as f64;

        // batch-norm statistics over every word position in the batch
        let words: Vec<&[f64]> = batch
            .iter()
            .flat_map(|ids| ids.iter().filter(|&&id| id != 0))
            .map(|&id| self.word_vector(id as usize))
            .collect();
        let stats = (!words.is_empty()).then(|| batch_stats(&words, q));
        let (mean, var) = stats.clone().unwrap_or_else(|| (vec![0.0; q], vec![1.0; q]));
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let gamma = self.gamma().to_vec();

        // normalized positions x̂ and upstream gradients d(x̂), in word order
        let mut xhat_all: Vec<Vec<f64>> = Vec::with_capacity(words.len());
        let mut dxhat_all: Vec<Vec<f64>> = Vec::with_capacity(words.len());
        let mut ids_all: Vec<usize> = Vec::with_capacity(words.len());
        let mut loss = 0.0;
        let cell = self.cell();

        for (ids, &y) in batch.iter().zip(targets) {
            let start = xhat_all.len();
            let mut steps = Vec::new();
            for &id in ids.iter().filter(|&&id| id != 0) {
                let e = self.word_vector(id as usize);
                let xhat: Vec<f64> = (0..q).map(|j| (e[j] - mean[j]) * inv_std[j]).collect();
                steps.push((0..q).map(|j| xhat[j] * gamma[j] + self.delta()[j]).collect::<Vec<f64>>());
                xhat_all.push(xhat);
                ids_all.push(id as usize);
            }
            let (h, caches) = self.recur(&steps);
            let head = dense_forward(&self.stack, &self.params, h, &mut dropout);
            let err = head.output - y;
            loss += err * err / m;
            let mut dh = dense_backward(&self.stack, &self.params, &mut grad, &head, 2.0 * err / m);

            // backpropagation through time
            let mut du_steps = vec![vec![0.0; q]; steps.len()];
            for (k, c) in caches.iter().enumerate().rev() {
                let x = &steps[k];
                let mut dh_prev: Vec<f64> = (0..hdim).map(|i| dh[i] * (1.0 - c.z[i])).collect();
                let dz: Vec<f64> = (0..hdim).map(|i| dh[i] * (c.cand[i] - c.h_prev[i])).collect();
                let dah: Vec<f64> = (0..hdim)
                    .map(|i| dh[i] * c.z[i] * (1.0 - c.cand[i] * c.cand[i]))
                    .collect();
                let dx = &mut du_steps[k];

                outer_acc(&mut grad[o.w_h..o.w_h + hdim * q], &dah, x);
                outer_acc(&mut grad[o.u_h..o.u_h + hdim * hdim], &dah, &c.rh);
                grad[o.b_h..o.b_h + hdim].iter_mut().zip(&dah).for_each(|(g, d)| *g += d);
                matvec_t_acc(cell.w_h, &dah, dx);
                let mut drh = vec![0.0; hdim];
                matvec_t_acc(cell.u_h, &dah, &mut drh);
                let dar: Vec<f64> = (0..hdim)
                    .map(|i| {
                        dh_prev[i] += drh[i] * c.r[i];
                        drh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i])
                    })
                    .collect();

                outer_acc(&mut grad[o.w_r..o.w_r + hdim * q], &dar, x);
                outer_acc(&mut grad[o.u_r..o.u_r + hdim * hdim], &dar, &c.h_prev);
                grad[o.b_r..o.b_r + hdim].iter_mut().zip(&dar).for_each(|(g, d)| *g += d);
                matvec_t_acc(cell.w_r, &dar, dx);
                matvec_t_acc(cell.u_r, &dar, &mut dh_prev);

                let daz: Vec<f64> = (0..hdim).map(|i| dz[i] * c.z[i] * (1.0 - c.z[i])).collect();
                outer_acc(&mut grad[o.w_z..o.w_z + hdim * q], &daz, x);
                outer_acc(&mut grad[o.u_z..o.u_z + hdim * hdim], &daz, &c.h_prev);
                grad[o.b_z..o.b_z + hdim].iter_mut().zip(&daz).for_each(|(g, d)| *g += d);
                matvec_t_acc(cell.w_z, &daz, dx);
                matvec_t_acc(cell.u_z, &daz, &mut dh_prev);

                dh = dh_prev;
            }
            for (k, du) in du_steps.into_iter().enumerate() {
                let xhat = &xhat_all[start + k];
                for j in 0..q {
                    grad[o.gamma + j] += du[j] * xhat[j];
                    grad[o.delta + j] += du[j];
                }
                dxhat_all.push((0..q).map(|j| du[j] * gamma[j]).collect());
            }
        }

        // batch-norm backward through the shared statistics
        let n = xhat_all.len();
        if n > 0 {
            let nf = n as f64;
            let mut sum_d = vec![0.0; q];
            let mut sum_dx = vec![0.0; q];
            for (d, xh) in dxhat_all.iter().zip(&xhat_all) {
                for j in 0..q {
                    sum_d[j] += d[j];
                    sum_dx[j] += d[j] * xh[j];
                }
            }
            for ((d, xh), &id) in dxhat_all.iter().zip(&xhat_all).zip(&ids_all) {
                let row = o.embedding + id * q;
                for j in 0..q {
                    grad[row + j] += inv_std[j] / nf * (nf * d[j] - sum_d[j] - xh[j] * sum_dx[j]);
                }
            }
        }
        grad[self.frozen()].fill(0.0);
        (loss, grad, stats)
    }

    fn absorb(&mut self, state: GruBatchState) {
        if let Some((mean, var)) = state {
            self.batch_norm.update(&mean, &var);
        }
    }

    fn predict(&self, samples: &[&Vec<u32>]) -> Result<Vec<f64>> {
        if self.batch_norm.updates == 0 {
            return Err(Error::Stats);
        }
        let (mean, var) = (&self.batch_norm.running_mean, &self.batch_norm.running_var);
        samples
            .iter()
            .map(|ids| {
                self.check_sample(ids)?;
                let steps: Vec<Vec<f64>> = ids
                    .iter()
                    .filter(|&&id| id != 0)
                    .map(|&id| self.normalize(self.word_vector(id as usize), mean, var))
                    .collect();
                let (h, _) = self.recur(&steps);
                Ok(dense_forward(&self.stack, &self.params, h, &mut None).output)
            })
            .collect()
    }
}

/// Looks up the embedding rows of an id sequence.
pub fn embed(ids: &[u32], model: &GruModel) -> Result<Vec<Vec<f64>>> {
    model.check_sample(&ids.to_vec())?;
    Ok(ids.iter().map(|&id| model.word_vector(id as usize).to_vec()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn sgd_momentum() -> Self {
        Optimizer::SgdMomentum { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drop probability at every dropout site.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::adam(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            dropout: 0.25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Spec(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate >= 0.0) || self.batch_size == 0 {
            return Err(Error::Spec("learning rate must be >= 0 and batch size >= 1".into()));
        }
        Ok(())
    }
}

struct OptimizerState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        OptimizerState {
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        let lr = cfg.learning_rate;
        self.steps += 1;
        match cfg.optimizer {
            Optimizer::SgdMomentum { momentum } => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.first).zip(grad) {
                    *v = momentum * *v - lr * g;
                    *p += *v;
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((p, m), v), g) in params
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(grad)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub curve: Vec<EpochLoss>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

pub fn mse<M: Network>(model: &M, inputs: &[M::Sample], targets: &[f64]) -> Result<f64> {
    let refs: Vec<&M::Sample> = inputs.iter().collect();
    let preds = model.predict(&refs)?;
    Ok(preds.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / targets.len().max(1) as f64)
}

/// Mini-batch training on the mean squared error. Each epoch records the
/// inference-mode training MSE and, if a validation set is given, the
/// validation MSE; the returned model holds the parameters of the epoch with
/// the lowest validation MSE (the last epoch without validation data).
pub fn train<M: Network>(
    mut model: M,
    train_set: (&[M::Sample], &[f64]),
    validation: Option<(&[M::Sample], &[f64])>,
    cfg: &TrainConfig,
) -> Result<Trained<M>> {
    cfg.validate()?;
    let (inputs, targets) = train_set;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Shape {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    for s in inputs.iter().chain(validation.iter().flat_map(|v| v.0.iter())) {
        model.check_sample(s)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(model.params().len());
    let frozen = model.frozen();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, M)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &inputs[i]).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
            let (loss, mut grad, state) = model.loss_grad(&batch, &ys, dropout);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            grad[frozen.clone()].fill(0.0);
            opt.step(cfg, model.params_mut(), &grad);
            model.absorb(state);
        }
        let train_mse = mse(&model, inputs, targets)?;
        if !train_mse.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let validation_mse = validation.map(|(x, y)| mse(&model, x, y)).transpose()?;
        curve.push(EpochLoss {
            epoch,
            train_mse,
            validation_mse,
        });
        let score = validation_mse.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score < b.0 || validation_mse.is_none()) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, 0),
    };
    Ok(Trained {
        model,
        curve,
        best_epoch,
    })
}

pub fn write_loss_curve<W: std::io::Write>(curve: &[EpochLoss], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_mse", "validation_mse"])?;
    for e in curve {
        w.write_record([
            e.epoch.to_string(),
            e.train_mse.to_string(),
            e.validation_mse.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<loss curve>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_param: usize,
    pub n_params: usize,
}

/// Central finite differences against the analytic gradient of the batch
/// MSE, dropout off, batch normalization on the batch's own statistics.
/// Relative error per parameter is `|a − n| / (|a| + |n| + 1e-12)`.
pub fn gradient_check<M: Network>(model: &M, batch: &[M::Sample], targets: &[f64], epsilon: f64) -> GradientCheck {
    let refs: Vec<&M::Sample> = batch.iter().collect();
    let (_, analytic, _) = model.loss_grad(&refs, targets, None);
    let mut probe = model.clone();
    let mut worst = (0.0, 0);
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let plus = probe.loss_grad(&refs, targets, None).0;
        probe.params_mut()[i] = orig - epsilon;
        let minus = probe.loss_grad(&refs, targets, None).0;
        probe.params_mut()[i] = orig;
        let numeric = if model.frozen().contains(&i) {
            0.0
        } else {
            (plus - minus) / (2.0 * epsilon)
        };
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    GradientCheck {
        max_relative_error: worst.0,
        worst_param: worst.1,
        n_params: analytic.len(),
    }
}

/// Self-describing model container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Mlp {
        model: MlpModel,
        config: TrainConfig,
        vocab_fingerprint: String,
    },
    Gru {
        model: GruModel,
        config: TrainConfig,
        vocab_fingerprint: String,
    },
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
