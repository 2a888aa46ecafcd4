//! Instance generation and the assumption checks the warm/cold results rely on.
//!
//! Two data models are supported. A [`FixedCountSpec`] lists how many points
//! each feature combination contributes to every chunk, so all chunks share
//! one histogram and differ only in their noise identities. A
//! [`BernoulliSpec`] draws each point's label uniformly and includes feature
//! `k` of that class independently with probability `p_k`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::framework::{Chunk, DataPoint, FeatureCombo, FeatureId, FeatureSet, FrameworkConfig, PointId};
use crate::strategies::{ComboSampler, ExperimentSchedule, Population, Rational};

/// Largest `K` for which [`check_assumption2`] enumerates every learned set.
pub const EXHAUSTIVE_MAX_FEATURES_PER_CLASS: u16 = 16;

/// Per-chunk multiplicities `n_A` of each feature combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ComboCount>", into = "Vec<ComboCount>")]
pub struct FixedCountSpec {
    counts: Population,
}

/// Serialized form of one `(A, n_A)` entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboCount {
    pub class: u16,
    pub features: Vec<u16>,
    pub count: u64,
}

impl TryFrom<Vec<ComboCount>> for FixedCountSpec {
    type Error = Error;

    fn try_from(entries: Vec<ComboCount>) -> Result<Self> {
        let mut counts = Population::new();
        for e in entries {
            let combo = FeatureCombo::from_indices(e.class, &e.features)?;
            if counts.insert(combo, e.count).is_some() {
                bail!(InvalidSpec, "combo {:?} of class {} listed twice", e.features, e.class);
            }
        }
        FixedCountSpec::new(counts)
    }
}

impl From<FixedCountSpec> for Vec<ComboCount> {
    fn from(spec: FixedCountSpec) -> Self {
        spec.counts
            .into_iter()
            .map(|(a, count)| ComboCount { class: a.class(), features: a.features().map(|f| f.index).collect(), count })
            .collect()
    }
}

impl FixedCountSpec {
    pub fn new(counts: Population) -> Result<Self> {
        if counts.is_empty() {
            bail!(InvalidSpec, "spec lists no feature combinations");
        }
        if let Some((a, _)) = counts.iter().find(|(_, &n)| n == 0) {
            bail!(InvalidSpec, "combo {a:?} has n_A = 0");
        }
        Ok(Self { counts })
    }

    /// The combo histogram of one chunk.
    pub fn from_chunk(chunk: &Chunk) -> Result<Self> {
        let mut counts = Population::new();
        for p in chunk.points() {
            *counts.entry(*p.combo()).or_insert(0) += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &Population {
        &self.counts
    }

    /// Chunk size `n = Σ n_A`.
    pub fn chunk_size(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Checks that every combo fits `S`.
    pub fn validate(&self, cfg: &FrameworkConfig) -> Result<()> {
        self.counts.keys().try_for_each(|a| cfg.check_combo(a))
    }

    /// Whether every subset of every `S_c` (the empty set included) appears.
    pub fn is_complete(&self, cfg: &FrameworkConfig) -> bool {
        first_missing_combo(self, cfg).is_none()
    }

    /// Per-chunk occurrence count of `v`, i.e. `n·g(v; T_j, T_j)`.
    pub fn chunk_count(&self, v: FeatureId) -> u64 {
        self.counts.iter().filter(|(a, _)| a.contains(v)).map(|(_, &n)| n).sum()
    }

    /// `n·h(v; L)`: points per chunk that contain `v` and are not well-classified by `learned`.
    pub fn unclassified_count(&self, v: FeatureId, learned: &FeatureSet, tau: u32) -> u64 {
        self.counts
            .iter()
            .filter(|(a, _)| a.contains(v) && !a.is_well_classified(learned, tau))
            .map(|(_, &n)| n)
            .sum()
    }
}

impl ComboSampler for FixedCountSpec {
    /// Draws `A` with probability `n_A / n`.
    fn sample_combo<R: Rng + ?Sized>(&self, rng: &mut R) -> FeatureCombo {
        let mut ticket = rng.random_range(0..self.chunk_size());
        for (a, &n) in &self.counts {
            if ticket < n {
                return *a;
            }
            ticket -= n;
        }
        unreachable!("ticket is below the total count")
    }
}

/// Hands out fresh point ids. The starting offset is drawn from the generator
/// so different seeds produce different id streams.
#[derive(Debug, Clone)]
pub struct PointIdStream {
    next: u64,
}

impl PointIdStream {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { next: u64::from(rng.random::<u32>()) << 32 }
    }

    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> PointId {
        let id = PointId(self.next);
        self.next += 1;
        id
    }
}

/// `J` chunks, each holding exactly `n_A` fresh points of every combo `A`.
pub fn gen_fixed_instance<R: Rng + ?Sized>(
    spec: &FixedCountSpec,
    experiments: usize,
    rng: &mut R,
) -> Result<ExperimentSchedule> {
    if experiments == 0 {
        bail!(InvalidConfig, "need at least one experiment");
    }
    let mut ids = PointIdStream::new(rng);
    let mut chunks = Vec::with_capacity(experiments);
    for _ in 0..experiments {
        let mut points = Vec::with_capacity(spec.chunk_size() as usize);
        for (a, &n) in &spec.counts {
            for _ in 0..n {
                points.push(DataPoint::new(ids.next_id(), a.class(), *a)?);
            }
        }
        points.shuffle(rng);
        chunks.push(Chunk::new(points)?);
    }
    ExperimentSchedule::new(chunks)
}

/// Independent Bernoulli feature inclusion with a uniform class prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliSpec {
    pub num_classes: u16,
    /// `p_k`, shared by every class.
    pub probs: Vec<f64>,
    /// Optional per-class override `p_{c,k}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_probs: Option<Vec<Vec<f64>>>,
    pub chunk_size: usize,
}

impl BernoulliSpec {
    pub fn new(num_classes: u16, probs: Vec<f64>, chunk_size: usize) -> Result<Self> {
        let spec = Self { num_classes, probs, class_probs: None, chunk_size };
        spec.validate()?;
        Ok(spec)
    }

    /// Draws every `p_k` from `U(low, high)`.
    pub fn uniform_random<R: Rng + ?Sized>(
        num_classes: u16,
        features_per_class: u16,
        low: f64,
        high: f64,
        chunk_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&low) || !(low..=1.0).contains(&high) {
            bail!(InvalidSpec, "probability range [{low}, {high}] is not inside [0, 1]");
        }
        let probs = (0..features_per_class).map(|_| low + (high - low) * rng.random::<f64>()).collect();
        Self::new(num_classes, probs, chunk_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 {
            bail!(InvalidSpec, "need at least one class");
        }
        if self.chunk_size == 0 {
            bail!(InvalidSpec, "chunk size must be positive");
        }
        if self.probs.len() > crate::framework::MAX_FEATURES_PER_CLASS {
            bail!(InvalidSpec, "too many features per class");
        }
        let in_range = |p: &f64| (0.0..=1.0).contains(p);
        if !self.probs.iter().all(in_range) {
            bail!(InvalidSpec, "feature probabilities must lie in [0, 1]");
        }
        if let Some(cp) = &self.class_probs {
            if cp.len() != self.num_classes as usize || cp.iter().any(|row| row.len() != self.probs.len()) {
                bail!(InvalidSpec, "per-class probabilities must be C x K");
            }
            if !cp.iter().flatten().all(in_range) {
                bail!(InvalidSpec, "feature probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn features_per_class(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, class: u16, k: usize) -> f64 {
        match &self.class_probs {
            Some(cp) => cp[class as usize][k],
            None => self.probs[k],
        }
    }

    /// Feature combination of a point of `class`.
    pub fn sample_class_combo<R: Rng + ?Sized>(&self, class: u16, rng: &mut R) -> FeatureCombo {
        let mut mask = 0u64;
        for k in 0..self.probs.len() {
            if rng.random::<f64>() < self.prob(class, k) {
                mask |= 1 << k;
            }
        }
        FeatureCombo::from_mask(class, mask)
    }
}

impl ComboSampler for BernoulliSpec {
    fn sample_combo<R: Rng + ?Sized>(&self, rng: &mut R) -> FeatureCombo {
        let class = rng.random_range(0..self.num_classes);
        self.sample_class_combo(class, rng)
    }
}

/// `J` chunks of freshly sampled Bernoulli points.
pub fn gen_bernoulli_instance<R: Rng + ?Sized>(
    spec: &BernoulliSpec,
    experiments: usize,
    rng: &mut R,
) -> Result<ExperimentSchedule> {
    spec.validate()?;
    if experiments == 0 {
        bail!(InvalidConfig, "need at least one experiment");
    }
    let mut ids = PointIdStream::new(rng);
    let mut chunks = Vec::with_capacity(experiments);
    for _ in 0..experiments {
        let points = (0..spec.chunk_size)
            .map(|_| {
                let combo = spec.sample_combo(rng);
                DataPoint::new(ids.next_id(), combo.class(), combo)
            })
            .collect::<Result<Vec<_>>>()?;
        chunks.push(Chunk::new(points)?);
    }
    ExperimentSchedule::new(chunks)
}

/// `h(v; L) = (1/n)·Σ n_A·1(v ∈ A ∧ |A∩L| < τ)`.
pub fn portion_unclassified(v: FeatureId, learned: &FeatureSet, spec: &FixedCountSpec, tau: u32) -> Rational {
    Rational::new(spec.unclassified_count(v, learned, tau) as i64, spec.chunk_size() as i64)
}

/// Which learned sets [`check_assumption2`] inspects.
#[derive(Debug, Clone, Copy)]
pub enum CheckMode<'a> {
    /// Every `L ⊂ S`, plus the per-class learnable/unlearnable clause.
    Exhaustive,
    /// Only the listed learned sets; the existence clause is not checked.
    Visited(&'a [FeatureSet]),
}

/// Why an instance fails the ordering assumption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssumptionViolation {
    /// Two unlearned same-class features have equal `h` under `learned`.
    DuplicatePortion { class: u16, first: FeatureId, second: FeatureId, learned: FeatureSet },
    /// Fewer than `tau − 1` features of the class reach `gamma` within one chunk.
    MissingLearnable { class: u16 },
    /// Every feature of the class reaches `gamma` within one chunk.
    MissingUnlearnable { class: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub satisfied: bool,
    pub violation: Option<AssumptionViolation>,
}

impl AssumptionReport {
    fn ok() -> Self {
        Self { satisfied: true, violation: None }
    }

    fn violated(v: AssumptionViolation) -> Self {
        Self { satisfied: false, violation: Some(v) }
    }
}

/// Checks the within-class ordering assumption.
///
/// Distinctness of `h` is required between features that are both outside the
/// learned set: those are the only ones the training process ever compares.
/// Since `h(v; L)` for `v ∈ S_c` depends on `L` only through `L ∩ S_c`, the
/// exhaustive mode enumerates subsets class by class.
pub fn check_assumption2(spec: &FixedCountSpec, cfg: &FrameworkConfig, mode: CheckMode<'_>) -> Result<AssumptionReport> {
    spec.validate(cfg)?;
    match mode {
        CheckMode::Exhaustive => {
            if cfg.features_per_class > EXHAUSTIVE_MAX_FEATURES_PER_CLASS {
                return Err(Error::SizeLimit(format!(
                    "K = {} exceeds the exhaustive limit of {EXHAUSTIVE_MAX_FEATURES_PER_CLASS}",
                    cfg.features_per_class
                )));
            }
            let by_class = combos_by_class(spec, cfg);
            for c in 0..cfg.num_classes {
                for mask in 0..(1u64 << cfg.features_per_class) {
                    if let Some(v) = duplicate_in_class(&by_class[c as usize], c, mask, cfg) {
                        return Ok(AssumptionReport::violated(v));
                    }
                }
            }
            if let Some(v) = existence_violation(spec, cfg) {
                return Ok(AssumptionReport::violated(v));
            }
            Ok(AssumptionReport::ok())
        }
        CheckMode::Visited(sets) => {
            let by_class = combos_by_class(spec, cfg);
            for learned in sets {
                for c in 0..cfg.num_classes {
                    let mask = learned.class_mask(c);
                    if let Some(v) = duplicate_in_class(&by_class[c as usize], c, mask, cfg) {
                        return Ok(AssumptionReport::violated(v));
                    }
                }
            }
            Ok(AssumptionReport::ok())
        }
    }
}

/// The per-class clause: at least `tau − 1` features reach `gamma` within one
/// chunk and at least one does not.
pub fn existence_violation(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Option<AssumptionViolation> {
    for c in 0..cfg.num_classes {
        let learnable = (0..cfg.features_per_class)
            .filter(|&k| spec.chunk_count(FeatureId::new(c, k)) >= cfg.gamma)
            .count() as u32;
        if learnable + 1 < cfg.tau {
            return Some(AssumptionViolation::MissingLearnable { class: c });
        }
        if learnable == cfg.features_per_class as u32 {
            return Some(AssumptionViolation::MissingUnlearnable { class: c });
        }
    }
    None
}

fn combos_by_class(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Vec<Vec<(u64, u64)>> {
    let mut by_class = alloc::vec![Vec::new(); cfg.num_classes as usize];
    for (a, &n) in spec.counts() {
        by_class[a.class() as usize].push((a.mask(), n));
    }
    by_class
}

fn duplicate_in_class(
    combos: &[(u64, u64)],
    class: u16,
    learned_mask: u64,
    cfg: &FrameworkConfig,
) -> Option<AssumptionViolation> {
    // n·h(v; L) for every unlearned v of the class, keyed by value.
    let mut seen: BTreeMap<u64, u16> = BTreeMap::new();
    for k in 0..cfg.features_per_class {
        let bit = 1u64 << k;
        if learned_mask & bit != 0 {
            continue;
        }
        let h: u64 = combos
            .iter()
            .filter(|(m, _)| m & bit != 0 && (m & learned_mask).count_ones() < cfg.tau)
            .map(|(_, n)| n)
            .sum();
        if let Some(&first) = seen.get(&h) {
            let learned = {
                let mut s = FeatureSet::new();
                s.set_class_mask(class, learned_mask);
                s
            };
            return Some(AssumptionViolation::DuplicatePortion {
                class,
                first: FeatureId::new(class, first),
                second: FeatureId::new(class, k),
                learned,
            });
        }
        seen.insert(h, k);
    }
    None
}

/// `δ = max_{v ∈ S∖G} h(v; G)`.
pub fn compute_delta(spec: &FixedCountSpec, g_set: &FeatureSet, cfg: &FrameworkConfig) -> Result<Rational> {
    let full = cfg.full_set();
    if full.is_subset(g_set) {
        return Err(Error::Domain("G covers all of S, so S \\ G is empty".into()));
    }
    let best = cfg
        .all_features()
        .filter(|v| !g_set.contains(*v))
        .map(|v| spec.unclassified_count(v, g_set, cfg.tau))
        .max()
        .unwrap_or(0);
    Ok(Rational::new(best as i64, spec.chunk_size() as i64))
}

/// First subset of some `S_c` that the spec leaves out, if any.
pub fn first_missing_combo(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Option<FeatureCombo> {
    let k = cfg.features_per_class as u32;
    (0..cfg.num_classes)
        .flat_map(|c| (0..1u64 << k.min(63)).map(move |m| FeatureCombo::from_mask(c, m)))
        .find(|a| !spec.counts().contains_key(a))
}

/// A spec listing every subset of every `S_c`, each with `n_A` drawn from `1..=max_count`.
pub fn random_complete_spec<R: Rng + ?Sized>(cfg: &FrameworkConfig, max_count: u64, rng: &mut R) -> Result<FixedCountSpec> {
    if cfg.features_per_class > EXHAUSTIVE_MAX_FEATURES_PER_CLASS {
        return Err(Error::SizeLimit(format!("a complete spec over K = {} is too large", cfg.features_per_class)));
    }
    if max_count == 0 {
        bail!(InvalidSpec, "max_count must be positive");
    }
    let mut counts = Population::new();
    for c in 0..cfg.num_classes {
        for m in 0..1u64 << cfg.features_per_class {
            counts.insert(FeatureCombo::from_mask(c, m), rng.random_range(1..=max_count));
        }
    }
    FixedCountSpec::new(counts)
}

/// Ranges for [`random_fixed_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecShape {
    pub classes: (u16, u16),
    pub features: (u16, u16),
    pub tau: (u32, u32),
    /// Upper bound on the chunk size `n`.
    pub max_chunk: u64,
}

impl SpecShape {
    /// Classes 2–3, 4–8 features per class, chunks of at most 40 points.
    pub const SMALL: SpecShape = SpecShape { classes: (2, 3), features: (4, 8), tau: (1, 3), max_chunk: 40 };

    /// Draws the class count, features per class and `tau`.
    pub fn sample_dims<R: Rng + ?Sized>(&self, rng: &mut R) -> SpecDims {
        let classes = rng.random_range(self.classes.0..=self.classes.1);
        let features = rng.random_range(self.features.0..=self.features.1);
        let tau = rng.random_range(self.tau.0..=self.tau.1.min(features as u32 - 1));
        SpecDims { classes, features, tau, max_chunk: self.max_chunk }
    }
}

/// Fixed sizes for one family of proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDims {
    pub classes: u16,
    pub features: u16,
    pub tau: u32,
    pub max_chunk: u64,
}

/// Draws a random fixed-count spec and matching config from `shape`, without
/// any assumption check.
pub fn random_fixed_spec<R: Rng + ?Sized>(shape: &SpecShape, rng: &mut R) -> (FixedCountSpec, FrameworkConfig) {
    let dims = shape.sample_dims(rng);
    random_spec_with_dims(&dims, rng)
}

/// Draws a random spec of the given sizes. Each class gets some points with no
/// features at all and a handful of combos of at most `tau + 1` features;
/// `gamma` is drawn between 2 and the largest per-chunk feature count.
pub fn random_spec_with_dims<R: Rng + ?Sized>(dims: &SpecDims, rng: &mut R) -> (FixedCountSpec, FrameworkConfig) {
    let (c, k, tau) = (dims.classes, dims.features, dims.tau);
    let budget = (dims.max_chunk / c as u64).max(2);
    loop {
        let mut counts = Population::new();
        for class in 0..c {
            let target = rng.random_range((budget / 2).max(2)..=budget);
            let mut used = rng.random_range(1..=2u64);
            counts.insert(FeatureCombo::empty(class), used);
            while used < target {
                let size = rng.random_range(1..=(tau as usize + 1).min(k as usize));
                let mut idx: Vec<u16> = (0..k).collect();
                idx.shuffle(rng);
                let combo = FeatureCombo::from_indices(class, &idx[..size]).expect("distinct indices");
                let n = rng.random_range(1..=3u64).min(target - used);
                *counts.entry(combo).or_insert(0) += n;
                used += n;
            }
        }
        let spec = FixedCountSpec::new(counts).expect("non-empty counts");
        let max_count = (0..c)
            .flat_map(|cl| (0..k).map(move |i| FeatureId::new(cl, i)))
            .map(|v| spec.chunk_count(v))
            .max()
            .unwrap_or(0);
        if max_count < 2 {
            continue;
        }
        let gamma = rng.random_range(2..=max_count);
        if let Ok(cfg) = FrameworkConfig::new(c, k, tau, gamma) {
            return (spec, cfg);
        }
    }
}

/// Draws a spec whose small combos give every feature of a class a distinct
/// weight, which the ordering assumption needs once almost all of a class is
/// learned.
///
/// Per class: one or two featureless points, then combos of at most `tau`
/// features packed greedily from distinct per-feature demands, then a few
/// larger combos with the remaining budget. Returns `None` when the demands
/// do not fit in the chunk budget.
pub fn structured_spec_with_dims<R: Rng + ?Sized>(dims: &SpecDims, rng: &mut R) -> Option<(FixedCountSpec, FrameworkConfig)> {
    let (c, k, tau) = (dims.classes, dims.features, dims.tau);
    let budget = dims.max_chunk / c as u64;
    let mut counts = Population::new();
    for class in 0..c {
        let mut used = rng.random_range(1..=2u64);
        counts.insert(FeatureCombo::empty(class), used);
        // K distinct demands out of 0..=K, assigned in random order.
        let mut values: Vec<u64> = (0..=k as u64).collect();
        values.shuffle(rng);
        values.truncate(k as usize);
        let mut demand: Vec<(u64, u16)> = values.into_iter().zip(0..k).collect();
        loop {
            demand.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let open = demand.iter().take_while(|d| d.0 > 0).count();
            if open == 0 {
                break;
            }
            let size = rng.random_range(1..=(tau as usize).min(open));
            let idx: Vec<u16> = demand[..size].iter().map(|d| d.1).collect();
            for d in &mut demand[..size] {
                d.0 -= 1;
            }
            *counts.entry(FeatureCombo::from_indices(class, &idx).expect("distinct")).or_insert(0) += 1;
            used += 1;
        }
        if used > budget {
            return None;
        }
        let extra = rng.random_range(0..=(budget - used).min(k as u64));
        for _ in 0..extra {
            let size = rng.random_range((tau as usize).max(1)..=(tau as usize + 2).min(k as usize));
            let mut idx: Vec<u16> = (0..k).collect();
            idx.shuffle(rng);
            *counts.entry(FeatureCombo::from_indices(class, &idx[..size]).expect("distinct")).or_insert(0) += 1;
        }
    }
    let spec = FixedCountSpec::new(counts).ok()?;
    let mut feature_counts: Vec<u64> = (0..c)
        .flat_map(|cl| (0..k).map(move |i| FeatureId::new(cl, i)))
        .map(|v| spec.chunk_count(v))
        .filter(|&n| n >= 2)
        .collect();
    if feature_counts.is_empty() {
        return None;
    }
    feature_counts.sort_unstable();
    feature_counts.dedup();
    let gamma = feature_counts[rng.random_range(0..feature_counts.len())];
    let cfg = FrameworkConfig::new(c, k, tau, gamma).ok()?;
    Some((spec, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    fn combo(c: u16, idx: &[u16]) -> FeatureCombo {
        FeatureCombo::from_indices(c, idx).unwrap()
    }

    fn spec(entries: &[(u16, &[u16], u64)]) -> FixedCountSpec {
        FixedCountSpec::new(entries.iter().map(|&(c, i, n)| (combo(c, i), n)).collect()).unwrap()
    }

    #[test]
    fn fixed_instance_repeats_histogram_with_fresh_ids() {
        let s = spec(&[(0, &[0, 1], 2), (1, &[2], 1)]);
        let sched = gen_fixed_instance(&s, 3, &mut stream(4, 0)).unwrap();
        assert_eq!(sched.num_experiments(), 3);
        let mut ids = alloc::collections::BTreeSet::new();
        for chunk in sched.chunks() {
            assert_eq!(chunk.len(), 3);
            let mut hist = Population::new();
            for p in chunk.points() {
                *hist.entry(*p.combo()).or_insert(0) += 1;
                ids.insert(p.id);
            }
            assert_eq!(&hist, s.counts());
        }
        assert_eq!(ids.len(), 9);
        assert!(gen_fixed_instance(&s, 0, &mut stream(4, 0)).is_err());
        assert!(FixedCountSpec::new(Population::new()).is_err());
    }

    #[test]
    fn bernoulli_extremes() {
        let cfg_c = 2;
        let zero = BernoulliSpec::new(cfg_c, vec![0.0; 5], 50).unwrap();
        let one = BernoulliSpec::new(cfg_c, vec![1.0; 5], 50).unwrap();
        let s0 = gen_bernoulli_instance(&zero, 2, &mut stream(1, 0)).unwrap();
        assert!(s0.chunks().iter().flat_map(|c| c.points()).all(|p| p.combo().is_empty()));
        let s1 = gen_bernoulli_instance(&one, 2, &mut stream(1, 0)).unwrap();
        assert!(s1.chunks().iter().flat_map(|c| c.points()).all(|p| p.combo().len() == 5));
        assert!(BernoulliSpec::new(2, vec![1.5], 10).is_err());
    }

    #[test]
    fn bernoulli_seeds_give_distinct_id_streams() {
        let s = BernoulliSpec::new(2, vec![0.3; 4], 10).unwrap();
        let a = gen_bernoulli_instance(&s, 1, &mut stream(1, 0)).unwrap();
        let b = gen_bernoulli_instance(&s, 1, &mut stream(2, 0)).unwrap();
        assert_eq!(a, gen_bernoulli_instance(&s, 1, &mut stream(1, 0)).unwrap());
        assert_ne!(a.chunks()[0].points()[0].id, b.chunks()[0].points()[0].id);
    }

    #[test]
    fn portion_examples() {
        let tau = 2;
        let v = FeatureId::new(0, 0);
        let u = FeatureId::new(0, 1);
        let w = FeatureId::new(0, 2);
        // A = {v,u}: 2 points, B = {v,w,z}: 1 point.
        let s = spec(&[(0, &[0, 1], 2), (0, &[0, 2, 3], 1)]);
        assert_eq!(portion_unclassified(v, &FeatureSet::new(), &s, tau), Rational::new(3, 3));
        let learned: FeatureSet = [u, w].into_iter().collect();
        assert_eq!(portion_unclassified(v, &learned, &s, tau), Rational::from_integer(1));
        assert_eq!(portion_unclassified(FeatureId::new(1, 0), &learned, &s, tau), Rational::from_integer(0));
        let both: FeatureSet = [v, u].into_iter().collect();
        assert_eq!(portion_unclassified(v, &both, &s, tau), Rational::new(1, 3));
    }

    #[test]
    fn identical_supports_violate_distinctness_at_empty_set() {
        let cfg = FrameworkConfig::new(2, 3, 2, 2).unwrap();
        let s = spec(&[(0, &[0, 1], 2), (0, &[2], 1), (1, &[0], 3), (1, &[1], 1)]);
        let r = check_assumption2(&s, &cfg, CheckMode::Exhaustive).unwrap();
        assert!(!r.satisfied);
        assert_eq!(
            r.violation,
            Some(AssumptionViolation::DuplicatePortion {
                class: 0,
                first: FeatureId::new(0, 0),
                second: FeatureId::new(0, 1),
                learned: FeatureSet::new(),
            })
        );
    }

    /// Nested supports with one rare feature per class, checked by hand:
    /// counts are 4 > 3 > 1 in both classes and no learned subset with two
    /// unlearned features produces a tie.
    #[test]
    fn nested_instance_satisfies_assumption() {
        let cfg = FrameworkConfig::new(2, 3, 2, 2).unwrap();
        let s = spec(&[
            (0, &[0], 1),
            (0, &[0, 1], 3),
            (0, &[2], 1),
            (1, &[0], 1),
            (1, &[0, 1], 3),
            (1, &[2], 1),
        ]);
        let r = check_assumption2(&s, &cfg, CheckMode::Exhaustive).unwrap();
        assert!(r.satisfied, "{r:?}");
    }

    #[test]
    fn all_features_learnable_violates_existence_clause() {
        let cfg = FrameworkConfig::new(2, 2, 1, 1).unwrap();
        let s = spec(&[(0, &[0], 2), (0, &[1], 1), (1, &[0], 2), (1, &[1], 1)]);
        let r = check_assumption2(&s, &cfg, CheckMode::Exhaustive).unwrap();
        assert_eq!(r.violation, Some(AssumptionViolation::MissingUnlearnable { class: 0 }));
    }

    #[test]
    fn exhaustive_mode_has_a_size_limit() {
        let cfg = FrameworkConfig::new(2, 17, 2, 2).unwrap();
        let s = spec(&[(0, &[0], 1)]);
        assert!(matches!(check_assumption2(&s, &cfg, CheckMode::Exhaustive), Err(Error::SizeLimit(_))));
        assert!(check_assumption2(&s, &cfg, CheckMode::Visited(&[FeatureSet::new()])).is_ok());
    }

    #[test]
    fn delta_examples() {
        let cfg = FrameworkConfig::new(2, 3, 2, 2).unwrap();
        let s = spec(&[(0, &[0, 1], 3), (0, &[0, 2], 1), (1, &[1], 2)]);
        // G = ∅: max raw containment is v(0,0) with 4 of 6.
        assert_eq!(compute_delta(&s, &FeatureSet::new(), &cfg).unwrap(), Rational::new(4, 6));
        // G = {v00, v01, v02}: every class-0 combo well-classified; class 1 untouched.
        let g: FeatureSet = (0..3).map(|k| FeatureId::new(0, k)).collect();
        assert_eq!(compute_delta(&s, &g, &cfg).unwrap(), Rational::new(2, 6));
        assert!(compute_delta(&s, &cfg.full_set(), &cfg).is_err());
        let g2: FeatureSet = g.union(&[FeatureId::new(1, 1)].into_iter().collect());
        assert_eq!(compute_delta(&s, &g2, &cfg).unwrap(), Rational::from_integer(0));
    }

    #[test]
    fn fixed_sampler_follows_multiplicities() {
        let s = spec(&[(0, &[0], 3), (1, &[1], 1)]);
        let mut rng = stream(9, 0);
        let hits = (0..4000).filter(|_| s.sample_combo(&mut rng).class() == 0).count();
        // p = 3/4, sd = sqrt(4000·3/16) ≈ 27.4
        assert!((hits as f64 - 3000.0).abs() < 4.0 * 27.4, "{hits}");
    }

    #[test]
    fn spec_json_shape_round_trips_through_entries() {
        let s = spec(&[(0, &[0, 1], 2), (1, &[2], 1)]);
        let entries: Vec<ComboCount> = s.clone().into();
        assert_eq!(entries[0], ComboCount { class: 0, features: vec![0, 1], count: 2 });
        assert_eq!(FixedCountSpec::try_from(entries).unwrap(), s);
    }

    /// Assumption check by brute force over the points of one generated chunk
    /// and every learned set of the whole feature space.
    fn naive_assumption(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> bool {
        let chunk = gen_fixed_instance(spec, 1, &mut stream(0, 0)).unwrap().chunks()[0].clone();
        let features: Vec<FeatureId> = cfg.all_features().collect();
        let h = |v: FeatureId, l: &FeatureSet| {
            chunk.points().iter().filter(|p| p.combo().contains(v) && !p.is_well_classified(l, cfg.tau)).count()
        };
        for mask in 0u32..(1 << features.len()) {
            let l: FeatureSet = features.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, f)| *f).collect();
            for (i, &v) in features.iter().enumerate() {
                for &w in &features[i + 1..] {
                    if v.class == w.class && !l.contains(v) && !l.contains(w) && h(v, &l) == h(w, &l) {
                        return false;
                    }
                }
            }
        }
        for c in 0..cfg.num_classes {
            let learnable = (0..cfg.features_per_class)
                .filter(|&k| chunk.points().iter().filter(|p| p.combo().contains(FeatureId::new(c, k))).count() as u64 >= cfg.gamma)
                .count() as u32;
            if learnable + 1 < cfg.tau || learnable == cfg.features_per_class as u32 {
                return false;
            }
        }
        true
    }

    #[test]
    fn exhaustive_check_agrees_with_brute_force() {
        let mut rng = stream(17, 0);
        let (mut yes, mut no) = (0, 0);
        for trial in 0..300 {
            let (classes, features) = [(2, 2), (2, 3), (2, 4), (2, 5), (3, 2), (3, 3)][trial % 6];
            let tau = rng.random_range(1..=(features as u32 - 1).min(2));
            let dims = SpecDims { classes, features, tau, max_chunk: 24 };
            let (s, cfg) = if trial % 2 == 0 {
                random_spec_with_dims(&dims, &mut rng)
            } else {
                match structured_spec_with_dims(&dims, &mut rng) {
                    Some(x) => x,
                    None => continue,
                }
            };
            let fast = check_assumption2(&s, &cfg, CheckMode::Exhaustive).unwrap().satisfied;
            assert_eq!(fast, naive_assumption(&s, &cfg), "{s:?} {cfg:?}");
            if fast {
                yes += 1;
            } else {
                no += 1;
            }
        }
        assert!(yes >= 10 && no >= 10, "{yes} satisfied, {no} violated");
    }

    /// Distinct portions leave at most one unlearned feature per class at
    /// `h = 0`, so `δ > 0` whenever some class has two features outside `G`.
    /// With a single unlearned feature per class `δ` can be 0.
    #[test]
    fn delta_on_assumption_instances() {
        let mut rng = stream(23, 0);
        let (mut positive, mut zero) = (0, 0);
        for _ in 0..40 {
            let dims = SpecShape::SMALL.sample_dims(&mut rng);
            let Some((s, cfg)) = (0..500).find_map(|_| {
                structured_spec_with_dims(&dims, &mut rng)
                    .filter(|(s, cfg)| check_assumption2(s, cfg, CheckMode::Exhaustive).unwrap().satisfied)
            }) else {
                continue;
            };
            let chunk = gen_fixed_instance(&s, 1, &mut rng).unwrap();
            let g = crate::framework::training_process(Default::default(), chunk.chunks()[0].points(), &cfg).learned;
            let d = compute_delta(&s, &g, &cfg).unwrap();
            let wide = (0..cfg.num_classes).any(|c| cfg.features_per_class as usize - g.count_in_class(c) >= 2);
            if wide {
                assert!(d > Rational::from_integer(0));
            }
            if d > Rational::from_integer(0) {
                positive += 1;
            } else {
                zero += 1;
            }
        }
        assert!(positive >= 20, "{positive} positive, {zero} zero");
    }

    #[test]
    fn delta_can_vanish_with_one_unlearned_feature_per_class() {
        let cfg = FrameworkConfig::new(2, 5, 1, 2).unwrap();
        let s = spec(&[
            (0, &[], 1),
            (0, &[1], 5),
            (0, &[2], 3),
            (0, &[3], 4),
            (0, &[4], 2),
            (1, &[], 2),
            (1, &[0], 3),
            (1, &[1], 2),
            (1, &[2], 5),
            (1, &[3], 4),
        ]);
        assert!(check_assumption2(&s, &cfg, CheckMode::Exhaustive).unwrap().satisfied);
        let chunk = gen_fixed_instance(&s, 1, &mut stream(0, 0)).unwrap();
        let g = crate::framework::training_process(Default::default(), chunk.chunks()[0].points(), &cfg).learned;
        assert_eq!(g.count_in_class(0) + g.count_in_class(1), 8);
        assert_eq!(compute_delta(&s, &g, &cfg).unwrap(), Rational::from_integer(0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn bernoulli_inclusion_rates_match_probabilities() {
        let mut rng = stream(31, 0);
        let spec = BernoulliSpec::uniform_random(2, 50, 0.0, 0.2, 1000, &mut rng).unwrap();
        let sched = gen_bernoulli_instance(&spec, 20, &mut rng).unwrap();
        let mut per_class = [0u64; 2];
        let mut hits = [[0u64; 50]; 2];
        for chunk in sched.chunks() {
            for p in chunk.points() {
                per_class[p.label() as usize] += 1;
                for f in p.combo().features() {
                    hits[f.class as usize][f.index as usize] += 1;
                }
            }
        }
        for c in 0..2 {
            let n = per_class[c] as f64;
            for k in 0..50 {
                let p = spec.prob(c as u16, k);
                let se = (p * (1.0 - p) / n).sqrt().max(1e-12);
                let rate = hits[c][k] as f64 / n;
                assert!((rate - p).abs() <= 4.0 * se, "class {c} feature {k}: {rate} vs {p}");
            }
        }
        // class labels are uniform: sd = sqrt(20000/4) ≈ 70.7
        assert!((per_class[0] as f64 - 10_000.0).abs() < 4.0 * 70.7);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]

        #[test]
        fn portion_shrinks_as_learned_set_grows(seed in proptest::prelude::any::<u64>(), extra in 0usize..64) {
            let mut rng = stream(seed, 0);
            let (s, cfg) = random_fixed_spec(&SpecShape::SMALL, &mut rng);
            let features: Vec<FeatureId> = cfg.all_features().collect();
            let l: FeatureSet = features.iter().filter(|_| rng.random_bool(0.3)).copied().collect();
            let bigger = l.union(&[features[extra % features.len()]].into_iter().collect());
            for &v in &features {
                proptest::prop_assert!(portion_unclassified(v, &bigger, &s, cfg.tau) <= portion_unclassified(v, &l, &s, cfg.tau));
            }
        }
    }
}
