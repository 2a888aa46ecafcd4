//! The expanding-dataset protocol for the neural engine.
//!
//! Training data arrives in chunks. Before experiment `j` the chosen method
//! prepares the network, then it trains on the accumulated data (or on the
//! newest chunk alone) until the train-accuracy target, and is scored on a
//! held-out test set.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::nn::{evaluate_accuracy, train_until, DenseNet, LabeledDataset, OptimState, SgdConfig, TrainControl};
use crate::reinit::{dash_apply, ema_chunk_gradients, momentum_reset, sp_apply, DashConfig, SpConfig};
use crate::rng::stream;

const INIT_STREAM: u64 = 100;
const SHUFFLE_STREAM: u64 = 101;
const NOISE_STREAM: u64 = 102;
const TRAIN_DATA_STREAM: u64 = 200;
const TEST_DATA_STREAM: u64 = 201;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    Cold,
    Warm,
    WarmRem,
    #[serde(rename = "sp")]
    ShrinkPerturb(SpConfig),
    Dash(DashConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cold => "cold",
            Method::Warm => "warm",
            Method::WarmRem => "warm_rem",
            Method::ShrinkPerturb(_) => "sp",
            Method::Dash(_) => "dash",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Train on every chunk seen so far.
    #[default]
    Accumulate,
    /// Train on the newest chunk only.
    Discard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub hidden: Vec<usize>,
    pub sgd: SgdConfig,
    pub control: TrainControl,
    pub method: Method,
    pub data_mode: DataMode,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            bail!(InvalidConfig, "hidden widths must be positive, got {:?}", self.hidden);
        }
        self.sgd.validate()?;
        self.control.validate()?;
        match &self.method {
            Method::Dash(d) => d.validate(self.data_mode == DataMode::Discard),
            Method::ShrinkPerturb(s) => s.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: usize,
    pub test_accuracy: f64,
    pub steps: u64,
    pub converged: bool,
    pub wall_ms: u64,
}

/// Milliseconds from some fixed origin.
pub trait Clock {
    fn now_ms(&self) -> u64;
}

/// A clock that never advances; rows then carry `wall_ms = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

/// What the method did to the network before an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum InitAction {
    Fresh,
    Kept,
    MomentumReset,
    ShrinkPerturb,
    Dash { mean_factor: f64, min_factor: f64 },
}

/// One run of the protocol, advanced an experiment at a time.
pub struct ExpandingRun<'a> {
    config: ProtocolConfig,
    chunks: &'a [LabeledDataset<f32>],
    test: &'a LabeledDataset<f32>,
    dims: Vec<usize>,
    net: DenseNet<f32>,
    opt: OptimState<f32>,
    train: LabeledDataset<f32>,
    next: usize,
    init_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl<'a> ExpandingRun<'a> {
    pub fn new(config: ProtocolConfig, chunks: &'a [LabeledDataset<f32>], test: &'a LabeledDataset<f32>) -> Result<Self> {
        config.validate()?;
        let first = chunks.first().ok_or(Error::Empty("chunk list"))?;
        for c in chunks {
            if c.is_empty() {
                return Err(Error::Empty("chunk"));
            }
            if c.dim() != first.dim() || c.num_classes() != first.num_classes() {
                bail!(ShapeMismatch, "chunks disagree on dimension or class count");
            }
        }
        if test.dim() != first.dim() || test.num_classes() != first.num_classes() {
            bail!(ShapeMismatch, "test set does not match the training chunks");
        }
        if test.is_empty() {
            return Err(Error::Empty("test set"));
        }
        let mut dims = vec![first.dim()];
        dims.extend(&config.hidden);
        dims.push(first.num_classes());
        let mut init_rng = stream(config.seed, INIT_STREAM);
        let net = DenseNet::he_uniform(&dims, &mut init_rng)?;
        let opt = OptimState::new(&net, config.sgd)?;
        Ok(Self {
            train: LabeledDataset::empty(first.dim(), first.num_classes())?,
            shuffle_rng: stream(config.seed, SHUFFLE_STREAM),
            noise_rng: stream(config.seed, NOISE_STREAM),
            config,
            chunks,
            test,
            dims,
            net,
            opt,
            next: 1,
            init_rng,
        })
    }

    pub fn net(&self) -> &DenseNet<f32> {
        &self.net
    }

    pub fn optimizer(&self) -> &OptimState<f32> {
        &self.opt
    }

    /// Index of the experiment the next call to [`Self::prepare`] starts.
    pub fn next_experiment(&self) -> usize {
        self.next
    }

    pub fn is_done(&self) -> bool {
        self.next > self.chunks.len()
    }

    /// Adds the next chunk and applies the method's initialization.
    pub fn prepare(&mut self) -> Result<InitAction> {
        let j = self.next;
        let chunk = self.chunks.get(j - 1).ok_or(Error::Empty("remaining chunks"))?;
        match self.config.data_mode {
            DataMode::Accumulate => self.train.extend(chunk)?,
            DataMode::Discard => self.train = chunk.clone(),
        }
        if j == 1 {
            return Ok(InitAction::Fresh);
        }
        let action = match self.config.method {
            Method::Cold => {
                self.net = DenseNet::he_uniform(&self.dims, &mut self.init_rng)?;
                self.opt = OptimState::new(&self.net, self.config.sgd)?;
                InitAction::Fresh
            }
            Method::Warm => InitAction::Kept,
            Method::WarmRem => {
                momentum_reset(&mut self.opt);
                InitAction::MomentumReset
            }
            Method::ShrinkPerturb(sp) if j.is_multiple_of(sp.interval) => {
                sp_apply(&mut self.net, &sp, &mut self.noise_rng)?;
                InitAction::ShrinkPerturb
            }
            Method::Dash(d) if j.is_multiple_of(d.interval) => {
                let seen: Vec<&LabeledDataset<f32>> = match self.config.data_mode {
                    DataMode::Accumulate => self.chunks[..j].iter().collect(),
                    DataMode::Discard => vec![chunk],
                };
                let g = ema_chunk_gradients(&self.net, &seen, d.alpha, self.config.sgd.batch_size)?;
                let factors = dash_apply(&mut self.net, &g, d.lambda)?;
                let all: Vec<f64> = factors.into_iter().flatten().collect();
                InitAction::Dash {
                    mean_factor: all.iter().sum::<f64>() / all.len() as f64,
                    min_factor: all.iter().copied().fold(f64::INFINITY, f64::min),
                }
            }
            Method::ShrinkPerturb(_) | Method::Dash(_) => InitAction::Kept,
        };
        Ok(action)
    }

    /// Trains on the current training set and scores the test set.
    pub fn train(&mut self, clock: &dyn Clock) -> Result<ResultRow> {
        if self.train.is_empty() {
            return Err(Error::Empty("training set; call prepare first"));
        }
        let start = clock.now_ms();
        let out = train_until(&mut self.net, &mut self.opt, &self.train, &self.config.control, &mut self.shuffle_rng)?;
        let test_accuracy = evaluate_accuracy(&self.net, self.test)?;
        let row = ResultRow {
            experiment: self.next,
            test_accuracy,
            steps: out.steps,
            converged: out.converged,
            wall_ms: clock.now_ms().saturating_sub(start),
        };
        self.next += 1;
        Ok(row)
    }

    pub fn step(&mut self, clock: &dyn Clock) -> Result<(InitAction, ResultRow)> {
        let action = self.prepare()?;
        Ok((action, self.train(clock)?))
    }
}

/// Runs every experiment and returns one row per chunk.
pub fn run_expanding(
    config: &ProtocolConfig,
    chunks: &[LabeledDataset<f32>],
    test: &LabeledDataset<f32>,
    clock: &dyn Clock,
) -> Result<Vec<ResultRow>> {
    let mut run = ExpandingRun::new(config.clone(), chunks, test)?;
    let mut rows = Vec::with_capacity(chunks.len());
    while !run.is_done() {
        rows.push(run.step(clock)?.1);
    }
    Ok(rows)
}

/// Mean test accuracy of the last row and across all rows.
pub fn summarize(rows: &[ResultRow]) -> Option<(f64, f64)> {
    let last = rows.last()?.test_accuracy;
    Some((last, rows.iter().map(|r| r.test_accuracy).sum::<f64>() / rows.len() as f64))
}

/// Points built from class-feature directions plus point-specific noise.
///
/// Inputs have `classes · features_per_class + noise_dim` coordinates. Each
/// class feature owns one coordinate, set to `feature_strength` when the point
/// contains it. The last `noise_dim` coordinates hold a Gaussian vector of
/// expected norm `noise_strength`, drawn fresh for every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFeatureNoiseSpec {
    pub classes: usize,
    pub features_per_class: usize,
    pub feature_strength: f64,
    pub noise_dim: usize,
    pub noise_strength: f64,
    pub points_per_chunk: usize,
    pub chunks: usize,
    pub test_points: usize,
    /// Inclusion probability of feature `k`, shared by every class.
    pub feature_probs: Vec<f64>,
}

impl SyntheticFeatureNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > u16::MAX as usize {
            bail!(InvalidConfig, "need between 2 and 65535 classes, got {}", self.classes);
        }
        if self.features_per_class == 0 || self.noise_dim == 0 {
            bail!(InvalidConfig, "feature and noise dimensions must be positive");
        }
        if self.points_per_chunk == 0 || self.chunks == 0 || self.test_points == 0 {
            bail!(InvalidConfig, "points per chunk, chunk count and test size must be positive");
        }
        if !(self.feature_strength >= 0.0 && self.noise_strength >= 0.0) {
            bail!(InvalidConfig, "strengths must be non-negative");
        }
        if self.feature_probs.len() != self.features_per_class {
            return Err(Error::DimensionMismatch { expected: self.features_per_class, actual: self.feature_probs.len() });
        }
        if let Some(p) = self.feature_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail!(InvalidConfig, "feature probability {p} outside [0, 1]");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.classes * self.features_per_class + self.noise_dim
    }

    fn sample_point<R: Rng>(&self, rng: &mut R, row: &mut Vec<f32>) -> u16 {
        let class = rng.random_range(0..self.classes);
        row.clear();
        row.resize(self.input_dim(), 0.0);
        let base = class * self.features_per_class;
        for (k, &p) in self.feature_probs.iter().enumerate() {
            if rng.random_bool(p) {
                row[base + k] = self.feature_strength as f32;
            }
        }
        let scale = self.noise_strength / (self.noise_dim as f64).sqrt();
        let offset = self.classes * self.features_per_class;
        for x in &mut row[offset..] {
            let z: f64 = StandardNormal.sample(rng);
            *x = (scale * z) as f32;
        }
        class as u16
    }

    fn sample_set<R: Rng>(&self, n: usize, rng: &mut R) -> Result<LabeledDataset<f32>> {
        let mut data = LabeledDataset::empty(self.input_dim(), self.classes)?;
        let mut row = Vec::new();
        for _ in 0..n {
            let y = self.sample_point(rng, &mut row);
            data.push(&row, y)?;
        }
        Ok(data)
    }
}

/// Training chunks and a test set. The test set comes from its own stream of
/// `seed`, so changing the chunk layout never changes it.
pub fn gen_feature_noise_dataset(spec: &SyntheticFeatureNoiseSpec, seed: u64) -> Result<(Vec<LabeledDataset<f32>>, LabeledDataset<f32>)> {
    spec.validate()?;
    let mut train_rng = stream(seed, TRAIN_DATA_STREAM);
    let chunks = (0..spec.chunks).map(|_| spec.sample_set(spec.points_per_chunk, &mut train_rng)).collect::<Result<Vec<_>>>()?;
    let test = spec.sample_set(spec.test_points, &mut stream(seed, TEST_DATA_STREAM))?;
    Ok((chunks, test))
}

/// Splits a dataset into `count` contiguous chunks of near-equal size.
pub fn split_chunks(data: &LabeledDataset<f32>, count: usize) -> Result<Vec<LabeledDataset<f32>>> {
    if count == 0 || count > data.len() {
        bail!(InvalidConfig, "cannot split {} rows into {count} non-empty chunks", data.len());
    }
    let (base, extra) = (data.len() / count, data.len() % count);
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let len = base + usize::from(i < extra);
        let idx: Vec<usize> = (start..start + len).collect();
        let (x, y) = data.gather(&idx);
        out.push(LabeledDataset::new(data.dim(), data.num_classes(), x, y)?);
        start += len;
    }
    Ok(out)
}

/// Label of a method plus its hyperparameters, for logs.
pub fn describe(method: &Method) -> String {
    match method {
        Method::ShrinkPerturb(s) => alloc::format!("sp(lambda={}, sigma={}, interval={})", s.lambda, s.sigma, s.interval),
        Method::Dash(d) => alloc::format!("dash(alpha={}, lambda={}, interval={})", d.alpha, d.lambda, d.interval),
        m => m.name().into(),
    }
}
