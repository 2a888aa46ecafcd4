//! A small dense feed-forward classifier with manual backpropagation.
//!
//! Hidden layers use ReLU, the output layer feeds softmax cross-entropy.
//! Everything is generic over the float type: training runs in `f32`, the
//! gradient checks in `f64`. Step counts are optimizer updates only; accuracy
//! evaluations are not counted.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// Float types the engine runs on.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// One dense layer: `outputs × inputs` weights in row-major order plus a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    /// Incoming weights of neuron `o`.
    pub fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    pub fn row_mut(&mut self, o: usize) -> &mut [T] {
        &mut self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Parameters of a network, or anything shaped like them (gradients,
/// momentum buffers, moving averages).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Params<T> {
    /// All-zero parameters for layer widths `dims` (input first, classes last).
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            bail!(InvalidConfig, "a network needs at least an input and an output width, got {dims:?}");
        }
        if dims.contains(&0) {
            bail!(InvalidConfig, "layer widths must be positive, got {dims:?}");
        }
        Ok(Self { layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims(), other.dims())))
        }
    }

    /// Every value, layer by layer, weights before bias.
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Value at flat index `i` in [`Params::iter`] order.
    pub fn get(&self, i: usize) -> Option<T> {
        self.iter().nth(i)
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut T> {
        self.iter_mut().nth(i)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, factor: T) {
        self.iter_mut().for_each(|x| *x = *x * factor);
    }

    /// `self ← self + a·other`.
    pub fn axpy(&mut self, a: T, other: &Self) -> Result<()> {
        self.check_shape(other)?;
        for (x, y) in self.iter_mut().zip(other.iter()) {
            *x = *x + a * y;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan())).collect();
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { inputs: l.inputs, outputs: l.outputs, weights: conv(&l.weights), bias: conv(&l.bias) })
                .collect(),
        }
    }
}

/// A ReLU network ending in softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<T> {
    pub params: Params<T>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Ok(Self { params: Params::zeros(dims)? })
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn he_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Params::zeros(dims)?;
        for layer in &mut params.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { params })
    }

    pub fn from_params(params: Params<T>) -> Result<Self> {
        for w in params.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                bail!(ShapeMismatch, "layer of width {} feeds a layer expecting {}", w[0].outputs, w[1].inputs);
            }
        }
        for l in &params.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                bail!(ShapeMismatch, "layer {}x{} has {} weights and {} biases", l.outputs, l.inputs, l.weights.len(), l.bias.len());
            }
        }
        if params.layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        Ok(Self { params })
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.params.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.params.dims()
    }

    /// Logits for `batch` rows of `inputs` (row-major, `batch × input_dim`).
    pub fn forward(&self, inputs: &[T], batch: usize) -> Result<Vec<T>> {
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::DimensionMismatch { expected: batch * self.input_dim(), actual: inputs.len() });
        }
        let mut acts = self.activations(inputs, batch);
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Outputs of every layer, the input first; hidden layers after ReLU, the last as raw logits.
    fn activations(&self, inputs: &[T], batch: usize) -> Vec<Vec<T>> {
        let n_layers = self.params.layers.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(inputs.to_vec());
        for (li, layer) in self.params.layers.iter().enumerate() {
            let x = &acts[li];
            let mut out = vec![T::zero(); batch * layer.outputs];
            for b in 0..batch {
                let xr = &x[b * layer.inputs..(b + 1) * layer.inputs];
                let or = &mut out[b * layer.outputs..(b + 1) * layer.outputs];
                for (o, slot) in or.iter_mut().enumerate() {
                    let w = layer.row(o);
                    let mut s = layer.bias[o];
                    for (wi, xi) in w.iter().zip(xr) {
                        s = s + *wi * *xi;
                    }
                    *slot = if li + 1 < n_layers { s.max(T::zero()) } else { s };
                }
            }
            acts.push(out);
        }
        acts
    }
}

/// `log Σ exp(z)`, shifted by the max for stability.
fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let s = z.iter().fold(T::zero(), |acc, &x| acc + (x - m).exp());
    m + s.ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in z.iter().enumerate().skip(1) {
        if x > z[best] {
            best = i;
        }
    }
    best
}

/// Dense feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset<T> {
    dim: usize,
    num_classes: usize,
    features: Vec<T>,
    labels: Vec<u16>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(dim: usize, num_classes: usize, features: Vec<T>, labels: Vec<u16>) -> Result<Self> {
        if dim == 0 {
            bail!(InvalidData, "feature dimension must be positive");
        }
        if num_classes < 2 {
            bail!(InvalidData, "need at least two classes");
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch { expected: dim * labels.len(), actual: features.len() });
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= num_classes) {
            bail!(InvalidData, "label {y} outside 0..{num_classes}");
        }
        Ok(Self { dim, num_classes, features, labels })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(dim, num_classes, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u16 {
        self.labels[i]
    }

    pub fn push(&mut self, row: &[T], label: u16) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: row.len() });
        }
        if label as usize >= self.num_classes {
            bail!(InvalidData, "label {label} outside 0..{}", self.num_classes);
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    /// Appends every row of `other`.
    pub fn extend(&mut self, other: &Self) -> Result<()> {
        if other.dim != self.dim || other.num_classes != self.num_classes {
            bail!(ShapeMismatch, "cannot append a {}-dim, {}-class dataset to a {}-dim, {}-class one", other.dim, other.num_classes, self.dim, self.num_classes);
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Rows `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Vec<T>, Vec<u16>) {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn cast<U: Scalar>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            dim: self.dim,
            num_classes: self.num_classes,
            features: self.features.iter().map(|x| U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan())).collect(),
            labels: self.labels.clone(),
        }
    }
}

fn check_compatible<T: Scalar>(net: &DenseNet<T>, data: &LabeledDataset<T>) -> Result<()> {
    if net.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), actual: data.dim() });
    }
    if net.num_classes() != data.num_classes() {
        bail!(ShapeMismatch, "network has {} outputs, dataset has {} classes", net.num_classes(), data.num_classes());
    }
    Ok(())
}

/// Mean cross-entropy over a batch given as raw rows and labels, and its gradient.
pub fn loss_and_grad_rows<T: Scalar>(net: &DenseNet<T>, inputs: &[T], labels: &[u16]) -> Result<(T, Params<T>)> {
    let batch = labels.len();
    if batch == 0 {
        return Err(Error::Empty("batch"));
    }
    if inputs.len() != batch * net.input_dim() {
        return Err(Error::DimensionMismatch { expected: batch * net.input_dim(), actual: inputs.len() });
    }
    let classes = net.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= classes) {
        bail!(InvalidData, "label {y} outside 0..{classes}");
    }
    let acts = net.activations(inputs, batch);
    let logits = acts.last().expect("output layer");
    let inv_b = T::one() / lit::<T>(batch as f64);

    let mut loss = T::zero();
    // d loss / d logits = (softmax − onehot) / B
    let mut delta = vec![T::zero(); batch * classes];
    for b in 0..batch {
        let z = &logits[b * classes..(b + 1) * classes];
        let lse = log_sum_exp(z);
        let y = labels[b] as usize;
        loss = loss + (lse - z[y]);
        for (c, d) in delta[b * classes..(b + 1) * classes].iter_mut().enumerate() {
            let p = (z[c] - lse).exp();
            let t = if c == y { T::one() } else { T::zero() };
            *d = (p - t) * inv_b;
        }
    }

    let mut grads = net.params.zeros_like();
    for li in (0..net.params.layers.len()).rev() {
        let layer = &net.params.layers[li];
        let x = &acts[li];
        let g = &mut grads.layers[li];
        for b in 0..batch {
            let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
            let xr = &x[b * layer.inputs..(b + 1) * layer.inputs];
            for (o, &dv) in d.iter().enumerate() {
                if dv == T::zero() {
                    continue;
                }
                g.bias[o] = g.bias[o] + dv;
                for (gw, &xi) in g.weights[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(xr) {
                    *gw = *gw + dv * xi;
                }
            }
        }
        if li == 0 {
            break;
        }
        let mut prev = vec![T::zero(); batch * layer.inputs];
        for b in 0..batch {
            let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
            let pr = &mut prev[b * layer.inputs..(b + 1) * layer.inputs];
            for (o, &dv) in d.iter().enumerate() {
                if dv == T::zero() {
                    continue;
                }
                for (p, &w) in pr.iter_mut().zip(layer.row(o)) {
                    *p = *p + dv * w;
                }
            }
            // ReLU: the stored activation is positive exactly where the pre-activation was.
            for (p, &a) in pr.iter_mut().zip(&x[b * layer.inputs..(b + 1) * layer.inputs]) {
                if a <= T::zero() {
                    *p = T::zero();
                }
            }
        }
        delta = prev;
    }
    Ok((loss * inv_b, grads))
}

/// Mean cross-entropy over rows `indices` of `data`, and its gradient.
pub fn loss_and_grad<T: Scalar>(net: &DenseNet<T>, data: &LabeledDataset<T>, indices: &[usize]) -> Result<(T, Params<T>)> {
    check_compatible(net, data)?;
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        bail!(InvalidData, "row {i} outside a dataset of {} rows", data.len());
    }
    let (x, y) = data.gather(indices);
    loss_and_grad_rows(net, &x, &y)
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, batch_size: 128 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bail!(InvalidConfig, "learning rate must be positive, got {}", self.lr);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!(InvalidConfig, "momentum must lie in [0, 1), got {}", self.momentum);
        }
        if self.batch_size == 0 {
            bail!(InvalidConfig, "batch size must be positive");
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `buf ← m·buf + g`, `θ ← θ − lr·buf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState<T> {
    pub config: SgdConfig,
    pub buffers: Params<T>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(net: &DenseNet<T>, config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, buffers: net.params.zeros_like() })
    }
}

pub fn sgd_momentum_step<T: Scalar>(net: &mut DenseNet<T>, opt: &mut OptimState<T>, grads: &Params<T>) -> Result<()> {
    net.params.check_shape(grads)?;
    net.params.check_shape(&opt.buffers)?;
    let m: T = lit(opt.config.momentum);
    let lr: T = lit(opt.config.lr);
    for ((p, b), g) in net.params.iter_mut().zip(opt.buffers.iter_mut()).zip(grads.iter()) {
        *b = m * *b + g;
        *p = *p - lr * *b;
    }
    Ok(())
}

/// When to stop training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainControl {
    pub target_train_accuracy: f64,
    pub max_steps: u64,
    /// Check train accuracy every this many steps; `None` checks after each epoch.
    pub eval_interval: Option<u64>,
}

impl Default for TrainControl {
    fn default() -> Self {
        Self { target_train_accuracy: 0.999, max_steps: 200_000, eval_interval: None }
    }
}

impl TrainControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_train_accuracy >= 0.0 && self.target_train_accuracy <= 1.0) {
            bail!(InvalidConfig, "target accuracy must lie in [0, 1], got {}", self.target_train_accuracy);
        }
        if self.max_steps == 0 {
            bail!(InvalidConfig, "max_steps must be at least 1");
        }
        if self.eval_interval == Some(0) {
            bail!(InvalidConfig, "eval interval must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Optimizer updates performed.
    pub steps: u64,
    pub converged: bool,
    pub train_accuracy: f64,
}

/// Fraction of rows whose argmax logit equals the label.
pub fn evaluate_accuracy<T: Scalar>(net: &DenseNet<T>, data: &LabeledDataset<T>) -> Result<f64> {
    check_compatible(net, data)?;
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    const BLOCK: usize = 512;
    let classes = net.num_classes();
    let mut hits = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + BLOCK).min(data.len());
        let logits = net.forward(&data.features()[start * data.dim()..end * data.dim()], end - start)?;
        for (b, z) in logits.chunks(classes).enumerate() {
            if argmax(z) == data.label(start + b) as usize {
                hits += 1;
            }
        }
        start = end;
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Shuffled mini-batch epochs until train accuracy reaches the target or the
/// step cap is hit. Accuracy is also checked before the first step, so a net
/// that already meets the target takes no steps.
pub fn train_until<T: Scalar, R: Rng + ?Sized>(
    net: &mut DenseNet<T>,
    opt: &mut OptimState<T>,
    data: &LabeledDataset<T>,
    control: &TrainControl,
    rng: &mut R,
) -> Result<TrainOutcome> {
    control.validate()?;
    opt.config.validate()?;
    check_compatible(net, data)?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let reached = |acc: f64| acc >= control.target_train_accuracy;
    let mut acc = evaluate_accuracy(net, data)?;
    if reached(acc) {
        return Ok(TrainOutcome { steps: 0, converged: true, train_accuracy: acc });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0u64;
    loop {
        order.shuffle(rng);
        for batch in order.chunks(opt.config.batch_size) {
            let (_, grads) = loss_and_grad(net, data, batch)?;
            sgd_momentum_step(net, opt, &grads)?;
            steps += 1;
            if control.eval_interval.is_some_and(|k| steps.is_multiple_of(k)) {
                acc = evaluate_accuracy(net, data)?;
                if reached(acc) {
                    return Ok(TrainOutcome { steps, converged: true, train_accuracy: acc });
                }
            }
            if steps >= control.max_steps {
                acc = evaluate_accuracy(net, data)?;
                return Ok(TrainOutcome { steps, converged: reached(acc), train_accuracy: acc });
            }
        }
        if control.eval_interval.is_none() {
            acc = evaluate_accuracy(net, data)?;
            if reached(acc) {
                return Ok(TrainOutcome { steps, converged: true, train_accuracy: acc });
            }
        }
    }
}
