//! The discrete training process.
//!
//! A learner repeatedly picks the most frequent not-yet-learned feature among
//! the points that still carry gradient. If that feature occurs at least
//! `gamma` times it is learned and every point that now overlaps the learned
//! set in `tau` or more features drops out. Otherwise the remaining points are
//! memorized through their unique noise and training stops.
//!
//! All comparisons use integer occurrence counts. The frequency test
//! `g(v) >= gamma / |T|` is exactly `count(v) >= gamma`.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// Largest supported number of features per class (combos are `u64` bitmasks).
pub const MAX_FEATURES_PER_CLASS: usize = 64;

/// Feature `k` of class `c`. Ordered lexicographically by `(class, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u16, u16)", into = "(u16, u16)")]
pub struct FeatureId {
    pub class: u16,
    pub index: u16,
}

impl FeatureId {
    pub const fn new(class: u16, index: u16) -> Self {
        Self { class, index }
    }

    fn bit(self) -> u64 {
        1u64 << self.index
    }
}

impl From<(u16, u16)> for FeatureId {
    fn from((class, index): (u16, u16)) -> Self {
        Self { class, index }
    }
}

impl From<FeatureId> for (u16, u16) {
    fn from(f: FeatureId) -> Self {
        (f.class, f.index)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v({},{})", self.class, self.index)
    }
}

/// The feature set `V(x)` of a data point. All members belong to one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCombo", into = "RawCombo")]
pub struct FeatureCombo {
    class: u16,
    mask: u64,
}

#[derive(Serialize, Deserialize)]
struct RawCombo {
    class: u16,
    features: Vec<u16>,
}

impl TryFrom<RawCombo> for FeatureCombo {
    type Error = Error;

    fn try_from(raw: RawCombo) -> Result<Self> {
        FeatureCombo::from_indices(raw.class, &raw.features)
    }
}

impl From<FeatureCombo> for RawCombo {
    fn from(c: FeatureCombo) -> Self {
        RawCombo { class: c.class, features: c.features().map(|f| f.index).collect() }
    }
}

impl FeatureCombo {
    /// The empty combination for `class`.
    pub const fn empty(class: u16) -> Self {
        Self { class, mask: 0 }
    }

    /// Builds a combo from feature indices of one class. Duplicates are rejected.
    pub fn from_indices(class: u16, indices: &[u16]) -> Result<Self> {
        let mut mask = 0u64;
        for &k in indices {
            if k as usize >= MAX_FEATURES_PER_CLASS {
                bail!(InvalidData, "feature index {k} exceeds the {MAX_FEATURES_PER_CLASS}-feature limit");
            }
            if mask & (1 << k) != 0 {
                bail!(InvalidData, "duplicate feature index {k} in combo of class {class}");
            }
            mask |= 1 << k;
        }
        Ok(Self { class, mask })
    }

    /// Builds a combo from feature ids; they must share one class.
    pub fn from_features<I: IntoIterator<Item = FeatureId>>(class: u16, features: I) -> Result<Self> {
        let mut indices = Vec::new();
        for f in features {
            if f.class != class {
                bail!(InvalidData, "feature {f} does not belong to class {class}");
            }
            indices.push(f.index);
        }
        Self::from_indices(class, &indices)
    }

    /// Builds a combo directly from a bitmask over feature indices.
    pub const fn from_mask(class: u16, mask: u64) -> Self {
        Self { class, mask }
    }

    pub fn class(&self) -> u16 {
        self.class
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn contains(&self, f: FeatureId) -> bool {
        f.class == self.class && (f.index as usize) < MAX_FEATURES_PER_CLASS && self.mask & f.bit() != 0
    }

    /// Members in increasing index order.
    pub fn features(&self) -> impl Iterator<Item = FeatureId> + '_ {
        let class = self.class;
        BitIter(self.mask).map(move |index| FeatureId { class, index })
    }

    /// `|V(x) ∩ learned|`.
    pub fn overlap(&self, learned: &FeatureSet) -> u32 {
        (self.mask & learned.class_mask(self.class)).count_ones()
    }

    /// Whether `learned` covers at least `tau` of this combo's features.
    pub fn is_well_classified(&self, learned: &FeatureSet, tau: u32) -> bool {
        self.overlap(learned) >= tau
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = u16;

    fn next(&mut self) -> Option<u16> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(i as u16)
    }
}

/// A set of features across classes, stored as one bitmask per class.
///
/// Trailing all-zero class masks are never stored, so structural equality is
/// set equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<FeatureId>", into = "Vec<FeatureId>")]
pub struct FeatureSet {
    masks: Vec<u64>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class_mask(&self, class: u16) -> u64 {
        self.masks.get(class as usize).copied().unwrap_or(0)
    }

    /// Adds `f`; returns `false` if it was already present.
    pub fn insert(&mut self, f: FeatureId) -> bool {
        let c = f.class as usize;
        if self.masks.len() <= c {
            self.masks.resize(c + 1, 0);
        }
        let had = self.masks[c] & f.bit() != 0;
        self.masks[c] |= f.bit();
        !had
    }

    pub fn remove(&mut self, f: FeatureId) -> bool {
        let c = f.class as usize;
        let Some(m) = self.masks.get_mut(c) else { return false };
        let had = *m & f.bit() != 0;
        *m &= !f.bit();
        self.trim();
        had
    }

    pub fn contains(&self, f: FeatureId) -> bool {
        (f.index as usize) < MAX_FEATURES_PER_CLASS && self.class_mask(f.class) & f.bit() != 0
    }

    pub fn len(&self) -> usize {
        self.masks.iter().map(|m| m.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Number of members in `class`.
    pub fn count_in_class(&self, class: u16) -> usize {
        self.class_mask(class).count_ones() as usize
    }

    /// Members in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.masks.iter().enumerate().flat_map(|(c, &m)| {
            BitIter(m).map(move |index| FeatureId { class: c as u16, index })
        })
    }

    /// Members of `class` in increasing index order.
    pub fn iter_class(&self, class: u16) -> impl Iterator<Item = FeatureId> {
        BitIter(self.class_mask(class)).map(move |index| FeatureId { class, index })
    }

    pub fn is_subset(&self, other: &FeatureSet) -> bool {
        self.masks.iter().enumerate().all(|(c, &m)| m & !other.class_mask(c as u16) == 0)
    }

    pub fn is_proper_subset(&self, other: &FeatureSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn union(&self, other: &FeatureSet) -> FeatureSet {
        let n = self.masks.len().max(other.masks.len());
        let masks = (0..n).map(|c| self.class_mask(c as u16) | other.class_mask(c as u16)).collect();
        FeatureSet { masks }
    }

    /// Replaces the mask of one class wholesale.
    pub fn set_class_mask(&mut self, class: u16, mask: u64) {
        let c = class as usize;
        if self.masks.len() <= c {
            self.masks.resize(c + 1, 0);
        }
        self.masks[c] = mask;
        self.trim();
    }

    fn trim(&mut self) {
        while self.masks.last() == Some(&0) {
            self.masks.pop();
        }
    }
}

impl FromIterator<FeatureId> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = FeatureId>>(iter: I) -> Self {
        let mut s = FeatureSet::new();
        for f in iter {
            s.insert(f);
        }
        s
    }
}

impl From<Vec<FeatureId>> for FeatureSet {
    fn from(v: Vec<FeatureId>) -> Self {
        v.into_iter().collect()
    }
}

impl From<FeatureSet> for Vec<FeatureId> {
    fn from(s: FeatureSet) -> Self {
        s.iter().collect()
    }
}

/// Identity of a data point's noise. Unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u64);

/// A labeled point: its class and the features it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct DataPoint {
    pub id: PointId,
    label: u16,
    combo: FeatureCombo,
}

#[derive(Deserialize)]
struct RawPoint {
    id: PointId,
    label: u16,
    combo: FeatureCombo,
}

impl TryFrom<RawPoint> for DataPoint {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        DataPoint::new(raw.id, raw.label, raw.combo)
    }
}

impl DataPoint {
    pub fn new(id: PointId, label: u16, combo: FeatureCombo) -> Result<Self> {
        if combo.class() != label {
            bail!(InvalidData, "point {}: combo class {} differs from label {label}", id.0, combo.class());
        }
        Ok(Self { id, label, combo })
    }

    pub fn label(&self) -> u16 {
        self.label
    }

    pub fn combo(&self) -> &FeatureCombo {
        &self.combo
    }

    pub fn is_well_classified(&self, learned: &FeatureSet, tau: u32) -> bool {
        self.combo.is_well_classified(learned, tau)
    }
}

/// One installment of training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DataPoint>", into = "Vec<DataPoint>")]
pub struct Chunk {
    points: Vec<DataPoint>,
}

impl Chunk {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("chunk"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<DataPoint>> for Chunk {
    type Error = Error;

    fn try_from(points: Vec<DataPoint>) -> Result<Self> {
        Chunk::new(points)
    }
}

impl From<Chunk> for Vec<DataPoint> {
    fn from(c: Chunk) -> Self {
        c.points
    }
}

/// Shape and thresholds of the discrete model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub num_classes: u16,
    pub features_per_class: u16,
    /// Learned features a point needs to be well-classified.
    pub tau: u32,
    /// Noise strength: a feature is learnable only with at least this many active occurrences.
    pub gamma: u64,
}

impl FrameworkConfig {
    pub fn new(num_classes: u16, features_per_class: u16, tau: u32, gamma: u64) -> Result<Self> {
        let cfg = Self { num_classes, features_per_class, tau, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            bail!(InvalidConfig, "need at least 2 classes, got {}", self.num_classes);
        }
        if self.features_per_class < 2 {
            bail!(InvalidConfig, "need at least 2 features per class, got {}", self.features_per_class);
        }
        if self.features_per_class as usize > MAX_FEATURES_PER_CLASS {
            bail!(InvalidConfig, "at most {MAX_FEATURES_PER_CLASS} features per class are supported");
        }
        if self.tau < 1 || self.tau >= self.features_per_class as u32 {
            bail!(InvalidConfig, "tau must satisfy 1 <= tau < K, got tau={} K={}", self.tau, self.features_per_class);
        }
        if self.gamma < 1 {
            bail!(InvalidConfig, "gamma must be positive");
        }
        Ok(())
    }

    pub fn total_features(&self) -> usize {
        self.num_classes as usize * self.features_per_class as usize
    }

    /// Every feature in `S`, lexicographically.
    pub fn all_features(&self) -> impl Iterator<Item = FeatureId> {
        let k = self.features_per_class;
        (0..self.num_classes).flat_map(move |c| (0..k).map(move |i| FeatureId::new(c, i)))
    }

    /// The full feature set `S`.
    pub fn full_set(&self) -> FeatureSet {
        self.all_features().collect()
    }

    /// Bitmask of all features of one class.
    pub fn class_mask(&self) -> u64 {
        if self.features_per_class as usize == MAX_FEATURES_PER_CLASS {
            u64::MAX
        } else {
            (1u64 << self.features_per_class) - 1
        }
    }

    /// Position of `f` in the lexicographic enumeration of `S`.
    pub fn slot(&self, f: FeatureId) -> usize {
        f.class as usize * self.features_per_class as usize + f.index as usize
    }

    pub fn feature_at(&self, slot: usize) -> FeatureId {
        let k = self.features_per_class as usize;
        FeatureId::new((slot / k) as u16, (slot % k) as u16)
    }

    /// Checks that a combo fits inside `S`.
    pub fn check_combo(&self, combo: &FeatureCombo) -> Result<()> {
        if combo.class() >= self.num_classes {
            bail!(InvalidData, "class {} out of range for C={}", combo.class(), self.num_classes);
        }
        if combo.mask() & !self.class_mask() != 0 {
            bail!(InvalidData, "combo uses a feature index >= K={}", self.features_per_class);
        }
        Ok(())
    }
}

/// One step of the training process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum TraceEvent {
    Learn { step: u32, feature: FeatureId },
    Memorize { step: u32, points: Vec<PointId> },
}

/// Learned features `L`, memorized points `M` and the event trace that built them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainState {
    pub learned: FeatureSet,
    pub memorized: BTreeSet<PointId>,
    pub trace: Vec<TraceEvent>,
}

impl TrainState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A state that already knows `learned` and has memorized nothing.
    pub fn with_learned(learned: FeatureSet) -> Self {
        Self { learned, ..Self::default() }
    }

    /// Rebuilds `(L, M)` from a trace, starting from empty sets.
    pub fn replay(trace: &[TraceEvent]) -> (FeatureSet, BTreeSet<PointId>) {
        let mut learned = FeatureSet::new();
        let mut memorized = BTreeSet::new();
        for ev in trace {
            match ev {
                TraceEvent::Learn { feature, .. } => {
                    learned.insert(*feature);
                }
                TraceEvent::Memorize { points, .. } => memorized.extend(points.iter().copied()),
            }
        }
        (learned, memorized)
    }

    /// Learn events of the trace, in order.
    pub fn learn_sequence(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.trace.iter().filter_map(|e| match e {
            TraceEvent::Learn { feature, .. } => Some(*feature),
            TraceEvent::Memorize { .. } => None,
        })
    }
}

/// Number of points in `active` whose combo contains `v`.
pub fn feature_count<'a, I>(v: FeatureId, active: I) -> u64
where
    I: IntoIterator<Item = &'a DataPoint>,
{
    active.into_iter().filter(|p| p.combo.contains(v)).count() as u64
}

/// Points of `data` that are neither well-classified by `learned` nor memorized.
pub fn nonzero_gradient_set(
    learned: &FeatureSet,
    memorized: &BTreeSet<PointId>,
    data: &[DataPoint],
    tau: u32,
) -> Vec<DataPoint> {
    data.iter()
        .filter(|p| !p.is_well_classified(learned, tau) && !memorized.contains(&p.id))
        .copied()
        .collect()
}

/// The candidate with the largest count; ties go to the lexicographically smallest feature.
pub fn select_feature<I, F>(candidates: I, counts: F) -> Option<FeatureId>
where
    I: IntoIterator<Item = FeatureId>,
    F: Fn(FeatureId) -> u64,
{
    select_by_rank(candidates, counts, |f| f)
}

fn select_by_rank<I, F, R, K>(candidates: I, counts: F, rank: R) -> Option<FeatureId>
where
    I: IntoIterator<Item = FeatureId>,
    F: Fn(FeatureId) -> u64,
    R: Fn(FeatureId) -> K,
    K: Ord,
{
    let mut best: Option<(u64, K, FeatureId)> = None;
    for f in candidates {
        let c = counts(f);
        let r = rank(f);
        let better = match &best {
            None => true,
            Some((bc, br, _)) => c > *bc || (c == *bc && r < *br),
        };
        if better {
            best = Some((c, r, f));
        }
    }
    best.map(|(_, _, f)| f)
}

/// Tie-break order among equally frequent features. Lower rank wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturePriority {
    ranks: Vec<u32>,
}

impl FeaturePriority {
    /// Lexicographic order on `FeatureId`.
    pub fn lexicographic(cfg: &FrameworkConfig) -> Self {
        Self { ranks: (0..cfg.total_features() as u32).collect() }
    }

    /// Uses `order` as the preference list; it must be a permutation of `S`.
    pub fn from_order(cfg: &FrameworkConfig, order: &[FeatureId]) -> Result<Self> {
        let total = cfg.total_features();
        if order.len() != total {
            bail!(InvalidConfig, "priority order has {} entries, expected {total}", order.len());
        }
        let mut ranks = vec![u32::MAX; total];
        for (r, &f) in order.iter().enumerate() {
            if f.class >= cfg.num_classes || f.index >= cfg.features_per_class {
                bail!(InvalidConfig, "priority order names {f}, outside S");
            }
            let slot = cfg.slot(f);
            if ranks[slot] != u32::MAX {
                bail!(InvalidConfig, "priority order repeats {f}");
            }
            ranks[slot] = r as u32;
        }
        Ok(Self { ranks })
    }

    /// A uniformly random order.
    pub fn shuffled<R: Rng + ?Sized>(cfg: &FrameworkConfig, rng: &mut R) -> Self {
        let mut order: Vec<FeatureId> = cfg.all_features().collect();
        order.shuffle(rng);
        Self::from_order(cfg, &order).expect("shuffled order is a permutation")
    }

    fn rank(&self, slot: usize) -> u32 {
        self.ranks[slot]
    }
}

/// Runs the training process on `data` from `state` with lexicographic tie-breaking.
///
/// `data` is the cumulative training set of the current experiment. Every
/// combo must fit `cfg` and point ids must be unique.
pub fn training_process(state: TrainState, data: &[DataPoint], cfg: &FrameworkConfig) -> TrainState {
    training_process_with(state, data, cfg, &FeaturePriority::lexicographic(cfg))
}

/// [`training_process`] with an explicit tie-break order.
pub fn training_process_with(
    mut state: TrainState,
    data: &[DataPoint],
    cfg: &FrameworkConfig,
    priority: &FeaturePriority,
) -> TrainState {
    let total = cfg.total_features();
    let tau = cfg.tau;
    let mut active = vec![false; data.len()];
    let mut counts = vec![0u64; total];
    // Points containing each feature, so learning v only revisits points that hold v.
    let mut postings: Vec<Vec<u32>> = vec![Vec::new(); total];
    let mut remaining = 0usize;

    for (i, p) in data.iter().enumerate() {
        if p.is_well_classified(&state.learned, tau) || state.memorized.contains(&p.id) {
            continue;
        }
        active[i] = true;
        remaining += 1;
        for f in p.combo.features() {
            let slot = cfg.slot(f);
            counts[slot] += 1;
            postings[slot].push(i as u32);
        }
    }

    let mut step = 0u32;
    while remaining > 0 {
        step += 1;
        let learned = &state.learned;
        let choice = select_by_rank(
            (0..total).map(|s| cfg.feature_at(s)).filter(|f| !learned.contains(*f)),
            |f| counts[cfg.slot(f)],
            |f| priority.rank(cfg.slot(f)),
        );
        match choice {
            Some(v) if counts[cfg.slot(v)] >= cfg.gamma => {
                state.learned.insert(v);
                state.trace.push(TraceEvent::Learn { step, feature: v });
                for &i in &postings[cfg.slot(v)] {
                    let i = i as usize;
                    if active[i] && data[i].is_well_classified(&state.learned, tau) {
                        active[i] = false;
                        remaining -= 1;
                        for f in data[i].combo.features() {
                            counts[cfg.slot(f)] -= 1;
                        }
                    }
                }
            }
            _ => {
                let points: Vec<PointId> =
                    data.iter().zip(&active).filter(|(_, &a)| a).map(|(p, _)| p.id).collect();
                state.memorized.extend(points.iter().copied());
                state.trace.push(TraceEvent::Memorize { step, points });
                remaining = 0;
            }
        }
    }
    state
}
