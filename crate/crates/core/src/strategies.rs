//! Cold, warm and ideal restarts over a sequence of experiments, and the
//! accuracy and training-time metrics used to compare them.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::framework::{
    nonzero_gradient_set, training_process_with, Chunk, DataPoint, FeatureCombo, FeaturePriority, FeatureId,
    FeatureSet, FrameworkConfig, TrainState,
};

/// Exact rational used for accuracies and feature portions.
pub type Rational = Ratio<i64>;

/// The chunks `T_1 … T_J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Chunk>", into = "Vec<Chunk>")]
pub struct ExperimentSchedule {
    chunks: Vec<Chunk>,
}

impl ExperimentSchedule {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::Empty("experiment schedule"));
        }
        Ok(Self { chunks })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn num_experiments(&self) -> usize {
        self.chunks.len()
    }

    /// `T_{1:j}` for 1-based `j`.
    pub fn cumulative(&self, j: usize) -> Vec<DataPoint> {
        self.chunks[..j].iter().flat_map(|c| c.points().iter().copied()).collect()
    }

    /// The first `j` experiments as their own schedule.
    pub fn prefix(&self, j: usize) -> Result<Self> {
        Self::new(self.chunks[..j.min(self.chunks.len())].to_vec())
    }

    /// Checks every point against `cfg` and that ids are unique across chunks.
    pub fn validate(&self, cfg: &FrameworkConfig) -> Result<()> {
        let mut seen = alloc::collections::BTreeSet::new();
        for p in self.chunks.iter().flat_map(|c| c.points()) {
            cfg.check_combo(p.combo())?;
            if !seen.insert(p.id) {
                bail!(InvalidData, "point id {} appears twice", p.id.0);
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<Chunk>> for ExperimentSchedule {
    type Error = Error;

    fn try_from(chunks: Vec<Chunk>) -> Result<Self> {
        Self::new(chunks)
    }
}

impl From<ExperimentSchedule> for Vec<Chunk> {
    fn from(s: ExperimentSchedule) -> Self {
        s.chunks
    }
}

/// How the learned and memorized sets carry over between experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Forget everything.
    Cold,
    /// Keep learned features and memorized points.
    Warm,
    /// Keep learned features, forget memorized points.
    Ideal,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Cold, StrategyKind::Warm, StrategyKind::Ideal];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Cold => "cold",
            StrategyKind::Warm => "warm",
            StrategyKind::Ideal => "ideal",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(StrategyKind::Cold),
            "warm" => Ok(StrategyKind::Warm),
            "ideal" => Ok(StrategyKind::Ideal),
            other => Err(Error::InvalidConfig(alloc::format!("unknown strategy {other:?}"))),
        }
    }
}

/// Test accuracy of a learned set, exact for fixed-count populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestAccuracy {
    Exact(Rational),
    Estimated(f64),
}

impl TestAccuracy {
    pub fn to_f64(&self) -> f64 {
        match self {
            TestAccuracy::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            TestAccuracy::Estimated(x) => *x,
        }
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// 1-based experiment index `j`.
    pub experiment: usize,
    /// `|N^(j,0)|`.
    pub active_at_start: usize,
    /// `|T_{1:j}|`.
    pub data_size: usize,
    pub learned_count: usize,
    /// `L^(j)`.
    pub learned: FeatureSet,
    /// Features learned during this experiment, in order.
    pub learn_order: Vec<FeatureId>,
    /// Learned set at the start of the experiment.
    pub learned_at_start: FeatureSet,
    pub memorized_count: usize,
    pub test_accuracy: Option<TestAccuracy>,
}

/// Runs `kind` over every experiment of `schedule` with lexicographic tie-breaking.
pub fn run_strategy(kind: StrategyKind, schedule: &ExperimentSchedule, cfg: &FrameworkConfig) -> Vec<RunRecord> {
    run_strategy_with(kind, schedule, cfg, &FeaturePriority::lexicographic(cfg), |_| None)
}

/// Runs `kind` with an explicit tie-break order, scoring each `L^(j)` with `evaluate`.
pub fn run_strategy_with<E>(
    kind: StrategyKind,
    schedule: &ExperimentSchedule,
    cfg: &FrameworkConfig,
    priority: &FeaturePriority,
    mut evaluate: E,
) -> Vec<RunRecord>
where
    E: FnMut(&FeatureSet) -> Option<TestAccuracy>,
{
    let mut records = Vec::with_capacity(schedule.num_experiments());
    let mut data: Vec<DataPoint> = Vec::new();
    let mut carried = TrainState::new();

    for (idx, chunk) in schedule.chunks().iter().enumerate() {
        data.extend_from_slice(chunk.points());
        let start = match kind {
            StrategyKind::Cold => TrainState::new(),
            StrategyKind::Warm => TrainState { trace: Vec::new(), ..carried },
            StrategyKind::Ideal => TrainState::with_learned(carried.learned),
        };
        let active_at_start = nonzero_gradient_set(&start.learned, &start.memorized, &data, cfg.tau).len();
        let learned_at_start = start.learned.clone();
        let state = training_process_with(start, &data, cfg, priority);
        let learn_order: Vec<FeatureId> = state.learn_sequence().collect();
        records.push(RunRecord {
            experiment: idx + 1,
            active_at_start,
            data_size: data.len(),
            learned_count: state.learned.len(),
            test_accuracy: evaluate(&state.learned),
            learned: state.learned.clone(),
            learn_order,
            learned_at_start,
            memorized_count: state.memorized.len(),
        });
        carried = state;
    }
    records
}

/// Multiplicity `n_A` of each feature combination in a population.
pub type Population = BTreeMap<FeatureCombo, u64>;

/// `ACC(L) = 1 − ((C−1)/C)·(1/n)·Σ n_A·1(|A∩L| < τ)`, exactly.
pub fn accuracy_exact(learned: &FeatureSet, population: &Population, cfg: &FrameworkConfig) -> Result<Rational> {
    let n: u64 = population.values().sum();
    if n == 0 {
        return Err(Error::InvalidPopulation("population has no points".into()));
    }
    let unclassified: u64 = population
        .iter()
        .filter(|(a, _)| !a.is_well_classified(learned, cfg.tau))
        .map(|(_, &m)| m)
        .sum();
    let c = cfg.num_classes as i64;
    let miss = Rational::new(c - 1, c) * Rational::new(unclassified as i64, n as i64);
    Ok(Rational::from_integer(1) - miss)
}

/// Draws test-point feature combinations.
pub trait ComboSampler {
    fn sample_combo<R: Rng + ?Sized>(&self, rng: &mut R) -> FeatureCombo;
}

/// Expected accuracy on a given test sample: 1 for well-classified points, `1/C` otherwise.
pub fn accuracy_on_combos(learned: &FeatureSet, combos: &[FeatureCombo], cfg: &FrameworkConfig) -> f64 {
    if combos.is_empty() {
        return 0.0;
    }
    let hits = combos.iter().filter(|a| a.is_well_classified(learned, cfg.tau)).count();
    let misses = combos.len() - hits;
    (hits as f64 + misses as f64 / cfg.num_classes as f64) / combos.len() as f64
}

/// Monte Carlo accuracy over `test_size` sampled points.
pub fn accuracy_monte_carlo<S, R>(
    learned: &FeatureSet,
    sampler: &S,
    test_size: usize,
    rng: &mut R,
    cfg: &FrameworkConfig,
) -> Result<f64>
where
    S: ComboSampler + ?Sized,
    R: Rng + ?Sized,
{
    if test_size == 0 {
        return Err(Error::Empty("test sample"));
    }
    let combos: Vec<FeatureCombo> = (0..test_size).map(|_| sampler.sample_combo(rng)).collect();
    Ok(accuracy_on_combos(learned, &combos, cfg))
}

/// `T^(J) = Σ_j |N^(j,0)|`.
pub fn training_time(records: &[RunRecord]) -> u64 {
    records.iter().map(|r| r.active_at_start as u64).sum()
}
