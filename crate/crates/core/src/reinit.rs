//! Reinitialization methods applied between experiments.
//!
//! DASH shrinks each neuron's incoming weights according to how well they
//! align with the negative of a moving average of per-chunk gradients. Shrink
//! & Perturb scales every parameter and adds Gaussian noise. Momentum reset
//! clears the optimizer buffers and leaves the weights alone.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::nn::{loss_and_grad, DenseNet, LabeledDataset, OptimState, Params, Scalar};

fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// Moving average of chunk gradients, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaGradient<T> {
    pub grad: Params<T>,
}

impl<T: Scalar> EmaGradient<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self { grad: net.params.zeros_like() }
    }

    /// `G ← (1 − α)·G + α·U`.
    pub fn update(&mut self, alpha: f64, u: &Params<T>) -> Result<()> {
        self.grad.scale(lit(1.0 - alpha));
        self.grad.axpy(lit(alpha), u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DashConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// Apply on experiments whose index is a multiple of this.
    pub interval: usize,
}

impl Default for DashConfig {
    fn default() -> Self {
        Self { alpha: 0.3, lambda: 0.3, interval: 1 }
    }
}

impl DashConfig {
    /// `alpha = 0` is accepted only with `interval > 1` or when old chunks are
    /// discarded; it then means the gradient of the current training data.
    pub fn validate(&self, discarding: bool) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            bail!(InvalidConfig, "dash alpha must lie in (0, 1], got {}", self.alpha);
        }
        if self.alpha == 0.0 && self.interval <= 1 && !discarding {
            bail!(InvalidConfig, "dash alpha = 0 needs interval > 1 or discard mode");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            bail!(InvalidConfig, "dash lambda must lie in (0, 1], got {}", self.lambda);
        }
        if self.interval == 0 {
            bail!(InvalidConfig, "dash interval must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpConfig {
    pub lambda: f64,
    pub sigma: f64,
    /// Apply on experiments whose index is a multiple of this.
    pub interval: usize,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self { lambda: 0.3, sigma: 0.01, interval: 1 }
    }
}

impl SpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            bail!(InvalidConfig, "sp lambda must lie in (0, 1], got {}", self.lambda);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bail!(InvalidConfig, "sp sigma must be non-negative, got {}", self.sigma);
        }
        if self.interval == 0 {
            bail!(InvalidConfig, "sp interval must be at least 1");
        }
        Ok(())
    }
}

/// Mean loss gradient over every row of `parts`, accumulated in mini-batches
/// of `batch_size` at the current parameters.
pub fn mean_gradient<T: Scalar>(net: &DenseNet<T>, parts: &[&LabeledDataset<T>], batch_size: usize) -> Result<Params<T>> {
    if batch_size == 0 {
        bail!(InvalidConfig, "batch size must be positive");
    }
    let total: usize = parts.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(Error::Empty("gradient data"));
    }
    let mut acc = net.params.zeros_like();
    for part in parts {
        let idx: Vec<usize> = (0..part.len()).collect();
        for batch in idx.chunks(batch_size) {
            let (_, g) = loss_and_grad(net, part, batch)?;
            acc.axpy(lit(batch.len() as f64 / total as f64), &g)?;
        }
    }
    Ok(acc)
}

/// Full-chunk mean gradient `U`.
pub fn chunk_gradient<T: Scalar>(net: &DenseNet<T>, chunk: &LabeledDataset<T>, batch_size: usize) -> Result<Params<T>> {
    mean_gradient(net, &[chunk], batch_size)
}

/// Folds chunk gradients oldest first into a zero-initialized average.
/// With `alpha = 0` the result is the mean gradient over all the chunks.
pub fn ema_chunk_gradients<T: Scalar>(
    net: &DenseNet<T>,
    chunks: &[&LabeledDataset<T>],
    alpha: f64,
    batch_size: usize,
) -> Result<EmaGradient<T>> {
    if chunks.is_empty() {
        return Err(Error::Empty("chunk list"));
    }
    if !net.params.is_finite() {
        bail!(Domain, "network parameters are not finite");
    }
    if alpha == 0.0 {
        return Ok(EmaGradient { grad: mean_gradient(net, chunks, batch_size)? });
    }
    let mut ema = EmaGradient::zeros_like(net);
    for chunk in chunks {
        let u = chunk_gradient(net, chunk, batch_size)?;
        if alpha == 1.0 {
            ema.grad = u;
        } else {
            ema.update(alpha, &u)?;
        }
    }
    Ok(ema)
}

/// `a·b / (‖a‖‖b‖)`, or 0 when either norm is zero. Accumulates in `f64`.
pub fn cosine_alignment<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Scales each weight row `θ` by `max(λ, cos(−G_row, θ))`. Biases are not touched.
/// Returns the factor applied to every neuron, layer by layer.
pub fn dash_apply<T: Scalar>(net: &mut DenseNet<T>, g: &EmaGradient<T>, lambda: f64) -> Result<Vec<Vec<f64>>> {
    net.params.check_shape(&g.grad)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        bail!(InvalidConfig, "dash lambda must lie in (0, 1], got {lambda}");
    }
    let mut factors = Vec::with_capacity(net.params.layers.len());
    for (layer, gl) in net.params.layers.iter_mut().zip(&g.grad.layers) {
        let mut lf = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            // cos(−g, θ) = −cos(g, θ)
            let s = -cosine_alignment(gl.row(o), layer.row(o))?;
            let f = lambda.max(s);
            if f != 1.0 {
                let ft: T = lit(f);
                layer.row_mut(o).iter_mut().for_each(|w| *w = *w * ft);
            }
            lf.push(f);
        }
        factors.push(lf);
    }
    Ok(factors)
}

/// `w ← λ·w + N(0, σ²)` on every parameter, biases included.
pub fn sp_apply<T: Scalar, R: Rng + ?Sized>(net: &mut DenseNet<T>, cfg: &SpConfig, rng: &mut R) -> Result<()> {
    cfg.validate()?;
    let lambda: T = lit(cfg.lambda);
    if cfg.sigma == 0.0 {
        net.params.scale(lambda);
        return Ok(());
    }
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::InvalidConfig(alloc::format!("{e}")))?;
    for w in net.params.iter_mut() {
        *w = lambda * *w + lit::<T>(normal.sample(rng));
    }
    Ok(())
}

/// Zeroes every momentum buffer.
pub fn momentum_reset<T: Scalar>(opt: &mut OptimState<T>) {
    opt.buffers.fill(T::zero());
}
