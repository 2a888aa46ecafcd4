//! Claim-by-claim verification of the strategy comparison results, and the
//! Bernoulli experiment that compares cold, warm and ideal training.
//!
//! Every check on a fixed-count instance is decided with integers and exact
//! rationals. A report whose precondition is unmet still lists the claims it
//! could evaluate, but they do not count as violations.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::framework::{
    training_process_with, FeatureCombo, FeatureId, FeaturePriority, FeatureSet, FrameworkConfig, TrainState,
};
use crate::instance::{
    check_assumption2, compute_delta, existence_violation, first_missing_combo, gen_bernoulli_instance,
    gen_fixed_instance, structured_spec_with_dims, AssumptionViolation, BernoulliSpec, CheckMode, FixedCountSpec, SpecShape,
};
use crate::rng::stream;
use crate::strategies::{
    accuracy_exact, accuracy_on_combos, run_strategy, run_strategy_with, training_time, ComboSampler,
    ExperimentSchedule, Rational, RunRecord, StrategyKind, TestAccuracy,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ClaimValue {
    Int(u64),
    Rational(Rational),
    Set(FeatureSet),
    /// Per-class learning sequences.
    Sequences(Vec<Vec<FeatureId>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    /// The experiment `J` the claim is about, if any.
    pub experiment: Option<usize>,
    pub holds: bool,
    pub lhs: ClaimValue,
    pub rhs: ClaimValue,
}

impl Claim {
    fn new(name: &str, experiment: Option<usize>, holds: bool, lhs: ClaimValue, rhs: ClaimValue) -> Self {
        Self { name: name.into(), experiment, holds, lhs, rhs }
    }
}

/// Why a report's claims are not binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unmet {
    /// A chunk's combo histogram differs from the first chunk's.
    NotFixedCount { experiment: usize },
    /// The ordering assumption fails at a learned set some run visited.
    Assumption { violation: AssumptionViolation },
    /// The spec leaves out some subset of a class's features.
    IncompleteSpec { missing: FeatureCombo },
    /// The ideal run starts experiment `experiment` with every point active.
    IdealCoverage { experiment: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Precondition {
    Met,
    Unmet { reason: Unmet },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub instance_id: u64,
    pub experiments: usize,
    pub precondition: Precondition,
    pub claims: Vec<Claim>,
    /// `γ/(δn)`; the strict accuracy gap is claimed for `J` above it.
    pub strictness_threshold: Option<Rational>,
    /// A feature outside `G` that still appears in unclassified points but in
    /// no combo it could complete. When set, no strict accuracy claim is made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_gap_blocked_by: Option<FeatureId>,
}

impl TheoremReport {
    fn new(instance_id: u64, experiments: usize) -> Self {
        Self {
            instance_id,
            experiments,
            precondition: Precondition::Met,
            claims: Vec::new(),
            strictness_threshold: None,
            strict_gap_blocked_by: None,
        }
    }

    fn unmet(mut self, reason: Unmet) -> Self {
        self.precondition = Precondition::Unmet { reason };
        self
    }

    pub fn precondition_met(&self) -> bool {
        self.precondition == Precondition::Met
    }

    /// Failing claims, counted only when the precondition holds.
    pub fn violations(&self) -> usize {
        if self.precondition_met() {
            self.claims.iter().filter(|c| !c.holds).count()
        } else {
            0
        }
    }

    pub fn failed_claims(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.holds)
    }

    fn push(&mut self, claim: Claim) {
        self.claims.push(claim);
    }
}

/// The shared combo histogram of all chunks, or the first chunk that differs.
fn fixed_count_population(schedule: &ExperimentSchedule) -> Result<core::result::Result<FixedCountSpec, Unmet>> {
    let first = FixedCountSpec::from_chunk(&schedule.chunks()[0])?;
    for (idx, chunk) in schedule.chunks().iter().enumerate().skip(1) {
        if FixedCountSpec::from_chunk(chunk)? != first {
            return Ok(Err(Unmet::NotFixedCount { experiment: idx + 1 }));
        }
    }
    Ok(Ok(first))
}

/// Every learned set a run passes through: each start set and each prefix of what was learned from it.
pub fn visited_sets<'a, I>(runs: I) -> Vec<FeatureSet>
where
    I: IntoIterator<Item = &'a [RunRecord]>,
{
    let mut seen = BTreeSet::new();
    for records in runs {
        for r in records {
            let mut s = r.learned_at_start.clone();
            seen.insert(s.clone());
            for &f in &r.learn_order {
                s.insert(f);
                seen.insert(s.clone());
            }
        }
    }
    seen.into_iter().collect()
}

fn assumption_unmet(spec: &FixedCountSpec, cfg: &FrameworkConfig, visited: &[FeatureSet]) -> Result<Option<Unmet>> {
    if let Some(violation) = existence_violation(spec, cfg) {
        return Ok(Some(Unmet::Assumption { violation }));
    }
    let report = check_assumption2(spec, cfg, CheckMode::Visited(visited))?;
    Ok(report.violation.map(|violation| Unmet::Assumption { violation }))
}

/// A feature `v ∉ G` with `h(v; G) > 0` such that no listed combo holds `v`
/// together with exactly `tau − 1` features of `G`.
///
/// Learning such a feature leaves every point as it was, so the accuracy gap
/// after `G` can stay at zero. A spec listing every subset of each class
/// never has one once `G` holds `tau − 1` features per class.
pub fn completion_gap(spec: &FixedCountSpec, g: &FeatureSet, cfg: &FrameworkConfig) -> Option<FeatureId> {
    cfg.all_features().filter(|v| !g.contains(*v)).find(|&v| {
        let mut unclassified = false;
        let mut completes = false;
        for a in spec.counts().keys().filter(|a| a.contains(v)) {
            let overlap = a.overlap(g);
            unclassified |= overlap < cfg.tau;
            completes |= overlap + 1 == cfg.tau;
        }
        unclassified && !completes
    })
}

fn accuracy(learned: &FeatureSet, spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Result<Rational> {
    accuracy_exact(learned, spec.counts(), cfg)
}

fn time(records: &[RunRecord], j: usize) -> u64 {
    training_time(&records[..j])
}

/// Warm against cold: warm never leaves `G`, is never more accurate, and trains less.
pub fn verify_theorem1(schedule: &ExperimentSchedule, cfg: &FrameworkConfig, instance_id: u64) -> Result<TheoremReport> {
    cfg.validate()?;
    schedule.validate(cfg)?;
    let jmax = schedule.num_experiments();
    let report = TheoremReport::new(instance_id, jmax);
    let spec = match fixed_count_population(schedule)? {
        Ok(s) => s,
        Err(u) => return Ok(report.unmet(u)),
    };
    let cold = run_strategy(StrategyKind::Cold, schedule, cfg);
    let warm = run_strategy(StrategyKind::Warm, schedule, cfg);
    if let Some(u) = assumption_unmet(&spec, cfg, &visited_sets([&cold[..], &warm[..]]))? {
        return Ok(report.unmet(u));
    }
    let mut report = report;
    let n = spec.chunk_size();
    let g = cold[0].learned.clone();
    let full = cfg.full_set();
    let delta = if full.is_subset(&g) { None } else { Some(compute_delta(&spec, &g, cfg)?) };
    let threshold = delta
        .filter(|d| *d > Rational::from_integer(0))
        .map(|d| Rational::from_integer(cfg.gamma as i64) / (d * Rational::from_integer(n as i64)));
    report.strictness_threshold = threshold;
    report.strict_gap_blocked_by = completion_gap(&spec, &g, cfg);

    report.push(Claim::new(
        "g_nonempty_proper_subset",
        None,
        !g.is_empty() && g.is_proper_subset(&full),
        ClaimValue::Set(g.clone()),
        ClaimValue::Set(full),
    ));
    report.push(Claim::new(
        "first_experiment_sets_agree",
        Some(1),
        warm[0].learned == g,
        ClaimValue::Set(warm[0].learned.clone()),
        ClaimValue::Set(g.clone()),
    ));
    for j in 1..=jmax {
        let lw = &warm[j - 1].learned;
        report.push(Claim::new(
            "warm_learned_equals_g",
            Some(j),
            *lw == g,
            ClaimValue::Set(lw.clone()),
            ClaimValue::Set(g.clone()),
        ));
        let tc = time(&cold, j);
        let closed = n * (j as u64) * (j as u64 + 1) / 2;
        report.push(Claim::new("cold_time_closed_form", Some(j), tc == closed, ClaimValue::Int(tc), ClaimValue::Int(closed)));
        if j < 2 {
            continue;
        }
        let aw = accuracy(lw, &spec, cfg)?;
        let ac = accuracy(&cold[j - 1].learned, &spec, cfg)?;
        report.push(Claim::new(
            "acc_warm_le_cold",
            Some(j),
            aw <= ac,
            ClaimValue::Rational(aw),
            ClaimValue::Rational(ac),
        ));
        let strict = report.strict_gap_blocked_by.is_none() && threshold.is_some_and(|t| Rational::from_integer(j as i64) > t);
        if strict {
            report.push(Claim::new(
                "acc_warm_lt_cold",
                Some(j),
                aw < ac,
                ClaimValue::Rational(aw),
                ClaimValue::Rational(ac),
            ));
        }
        let tw = time(&warm, j);
        report.push(Claim::new("time_warm_lt_cold", Some(j), tw < tc, ClaimValue::Int(tw), ClaimValue::Int(tc)));
    }
    Ok(report)
}

/// Ideal against cold and warm: ideal learns exactly what cold learns, and its
/// training time sits strictly between the other two.
pub fn verify_theorem2(schedule: &ExperimentSchedule, cfg: &FrameworkConfig, instance_id: u64) -> Result<TheoremReport> {
    cfg.validate()?;
    schedule.validate(cfg)?;
    let jmax = schedule.num_experiments();
    let report = TheoremReport::new(instance_id, jmax);
    let spec = match fixed_count_population(schedule)? {
        Ok(s) => s,
        Err(u) => return Ok(report.unmet(u)),
    };
    let cold = run_strategy(StrategyKind::Cold, schedule, cfg);
    let warm = run_strategy(StrategyKind::Warm, schedule, cfg);
    let ideal = run_strategy(StrategyKind::Ideal, schedule, cfg);
    if let Some(u) = assumption_unmet(&spec, cfg, &visited_sets([&cold[..], &warm[..], &ideal[..]]))? {
        return Ok(report.unmet(u));
    }
    let mut report = report;
    let mut coverage_gap = None;
    for j in 1..=jmax {
        let (li, lc) = (&ideal[j - 1].learned, &cold[j - 1].learned);
        report.push(Claim::new(
            "ideal_learned_equals_cold",
            Some(j),
            li == lc,
            ClaimValue::Set(li.clone()),
            ClaimValue::Set(lc.clone()),
        ));
        let (tw, ti, tc) = (time(&warm, j), time(&ideal, j), time(&cold, j));
        if j == 1 {
            report.push(Claim::new("first_times_agree", Some(1), tw == ti && ti == tc, ClaimValue::Int(ti), ClaimValue::Int(tc)));
            continue;
        }
        let active = ideal[j - 1].active_at_start as u64;
        let size = ideal[j - 1].data_size as u64;
        let covered = active < size;
        if !covered && coverage_gap.is_none() {
            coverage_gap = Some(j);
        }
        report.push(Claim::new("ideal_active_below_data", Some(j), covered, ClaimValue::Int(active), ClaimValue::Int(size)));
        report.push(Claim::new("time_warm_lt_ideal", Some(j), tw < ti, ClaimValue::Int(tw), ClaimValue::Int(ti)));
        report.push(Claim::new("time_ideal_lt_cold", Some(j), ti < tc, ClaimValue::Int(ti), ClaimValue::Int(tc)));
    }
    Ok(match coverage_gap {
        Some(experiment) => report.unmet(Unmet::IdealCoverage { experiment }),
        None => report,
    })
}

/// Learned features grouped by class, each in learning order.
pub fn per_class_sequences(state: &TrainState, cfg: &FrameworkConfig) -> Vec<Vec<FeatureId>> {
    let mut out = vec![Vec::new(); cfg.num_classes as usize];
    for f in state.learn_sequence() {
        out[f.class as usize].push(f);
    }
    out
}

fn is_prefix_per_class(short: &[Vec<FeatureId>], long: &[Vec<FeatureId>]) -> bool {
    short.iter().zip(long).all(|(s, l)| l.starts_with(s))
}

fn record_visited(start: &FeatureSet, state: &TrainState, into: &mut BTreeSet<FeatureSet>) {
    let mut s = start.clone();
    into.insert(s.clone());
    for f in state.learn_sequence() {
        s.insert(f);
        into.insert(s.clone());
    }
}

/// Within-class learning order does not depend on tie-breaking, and more data
/// only extends each class's sequence.
///
/// Training is rerun on every prefix `T_{1:j}` from two start sets, the empty
/// set and `G`, under `permutations` tie-break orders (the first is the
/// lexicographic one).
pub fn verify_lemma_order<R: Rng + ?Sized>(
    schedule: &ExperimentSchedule,
    cfg: &FrameworkConfig,
    permutations: usize,
    rng: &mut R,
    instance_id: u64,
) -> Result<TheoremReport> {
    cfg.validate()?;
    schedule.validate(cfg)?;
    if permutations == 0 {
        bail!(InvalidConfig, "need at least one tie-break order");
    }
    let jmax = schedule.num_experiments();
    let mut report = TheoremReport::new(instance_id, jmax);
    let spec = match fixed_count_population(schedule)? {
        Ok(s) => s,
        Err(u) => return Ok(report.unmet(u)),
    };
    let lexicographic = FeaturePriority::lexicographic(cfg);
    let priorities: Vec<FeaturePriority> = core::iter::once(lexicographic.clone())
        .chain((1..permutations).map(|_| FeaturePriority::shuffled(cfg, rng)))
        .collect();

    let first = schedule.cumulative(1);
    let g = training_process_with(TrainState::new(), &first, cfg, &lexicographic).learned;
    let mut visited = BTreeSet::new();

    for start in [FeatureSet::new(), g] {
        let mut previous: Option<Vec<Vec<FeatureId>>> = None;
        for j in 1..=jmax {
            let data = schedule.cumulative(j);
            let runs: Vec<Vec<Vec<FeatureId>>> = priorities
                .iter()
                .map(|p| {
                    let state = training_process_with(TrainState::with_learned(start.clone()), &data, cfg, p);
                    record_visited(&start, &state, &mut visited);
                    per_class_sequences(&state, cfg)
                })
                .collect();
            let base = &runs[0];
            let odd = runs.iter().find(|r| *r != base).unwrap_or(base);
            report.push(Claim::new(
                "class_order_ignores_tie_breaks",
                Some(j),
                odd == base,
                ClaimValue::Sequences(base.clone()),
                ClaimValue::Sequences(odd.clone()),
            ));
            if let Some(prev) = previous {
                report.push(Claim::new(
                    "class_order_extends_with_data",
                    Some(j),
                    is_prefix_per_class(&prev, base),
                    ClaimValue::Sequences(prev),
                    ClaimValue::Sequences(base.clone()),
                ));
            }
            previous = Some(base.clone());
        }
    }
    let visited: Vec<FeatureSet> = visited.into_iter().collect();
    let check = check_assumption2(&spec, cfg, CheckMode::Visited(&visited))?;
    if let Some(violation) = check.violation {
        report = report.unmet(Unmet::Assumption { violation });
    }
    Ok(report)
}

/// Whether `(a, b)` meets the monotonicity precondition: `a ⊊ b` and `a`
/// holds at least `tau − 1` features of every class.
pub fn lemma_acc_pair_valid(a: &FeatureSet, b: &FeatureSet, cfg: &FrameworkConfig) -> bool {
    let full = cfg.full_set();
    a.is_proper_subset(b)
        && b.is_subset(&full)
        && (0..cfg.num_classes).all(|c| a.count_in_class(c) + 1 >= cfg.tau as usize)
}

/// Draws a valid pair `(A, B)` for [`lemma_acc_pair_valid`]: each class
/// receives a random subset of at least `tau − 1` features, and `B` adds a
/// non-empty random subset of the rest.
pub fn sample_acc_pair<R: Rng + ?Sized>(cfg: &FrameworkConfig, rng: &mut R) -> (FeatureSet, FeatureSet) {
    let k = cfg.features_per_class;
    loop {
        let mut a = FeatureSet::new();
        for c in 0..cfg.num_classes {
            let size = rng.random_range(cfg.tau.saturating_sub(1) as u16..=k);
            let mut idx: Vec<u16> = (0..k).collect();
            rand::seq::SliceRandom::shuffle(&mut idx[..], rng);
            for &i in &idx[..size as usize] {
                a.insert(FeatureId::new(c, i));
            }
        }
        let rest: Vec<FeatureId> = cfg.all_features().filter(|f| !a.contains(*f)).collect();
        if rest.is_empty() {
            continue;
        }
        let mut b = a.clone();
        b.insert(rest[rng.random_range(0..rest.len())]);
        for f in &rest {
            if rng.random_bool(0.5) {
                b.insert(*f);
            }
        }
        return (a, b);
    }
}

/// Accuracy strictly increases along `A ⊊ B` once `A` holds `tau − 1` features per class.
///
/// The strict step needs the completing combo of `tau` features to be present,
/// so the precondition is that the spec lists every subset of every class.
pub fn verify_lemma_acc_monotone<R: Rng + ?Sized>(
    spec: &FixedCountSpec,
    cfg: &FrameworkConfig,
    trials: usize,
    rng: &mut R,
    instance_id: u64,
) -> Result<TheoremReport> {
    cfg.validate()?;
    spec.validate(cfg)?;
    let mut report = TheoremReport::new(instance_id, 0);
    for _ in 0..trials {
        let (a, b) = sample_acc_pair(cfg, rng);
        let (acc_a, acc_b) = (accuracy(&a, spec, cfg)?, accuracy(&b, spec, cfg)?);
        report.push(Claim::new(
            "acc_strictly_increases",
            None,
            acc_a < acc_b,
            ClaimValue::Rational(acc_a),
            ClaimValue::Rational(acc_b),
        ));
    }
    if let Some(missing) = first_missing_combo(spec, cfg) {
        report = report.unmet(Unmet::IncompleteSpec { missing });
    }
    Ok(report)
}

/// `G`: what training from scratch learns on one chunk of `spec`.
pub fn first_learned_set(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Result<FeatureSet> {
    let chunk = gen_fixed_instance(spec, 1, &mut stream(0, 0))?;
    Ok(crate::framework::training_process(TrainState::new(), chunk.chunks()[0].points(), cfg).learned)
}

/// One theorem-sweep instance: a rejection-sampled spec and both reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepInstance {
    pub instance_id: u64,
    /// Proposals rejected before this spec passed the assumption check.
    pub rejected: u64,
    pub config: FrameworkConfig,
    pub spec: FixedCountSpec,
    pub theorem1: TheoremReport,
    pub theorem2: TheoremReport,
}

/// Proposals tried for one set of sizes before new sizes are drawn.
pub const PROPOSALS_PER_SHAPE: u64 = 2000;

/// Whether a spec is usable for the theorem sweep: it passes the exhaustive
/// assumption check, `G` classifies at least one point, and [`completion_gap`]
/// finds nothing.
pub fn sweep_admissible(spec: &FixedCountSpec, cfg: &FrameworkConfig) -> Result<bool> {
    if !check_assumption2(spec, cfg, CheckMode::Exhaustive)?.satisfied {
        return Ok(false);
    }
    let g = first_learned_set(spec, cfg)?;
    let covers = spec.counts().keys().any(|a| a.is_well_classified(&g, cfg.tau));
    Ok(covers && completion_gap(spec, &g, cfg).is_none())
}

/// Rejection-samples a spec for the theorem sweep. Sizes are drawn from
/// `shape`; sizes that yield nothing within [`PROPOSALS_PER_SHAPE`] proposals
/// are redrawn. Returns the spec, its config and the number of rejected
/// proposals.
pub fn sample_assumption_instance<R: Rng + ?Sized>(
    shape: &SpecShape,
    rng: &mut R,
) -> Result<(FixedCountSpec, FrameworkConfig, u64)> {
    let mut rejected = 0;
    loop {
        let dims = shape.sample_dims(rng);
        for _ in 0..PROPOSALS_PER_SHAPE {
            if let Some((spec, cfg)) = structured_spec_with_dims(&dims, rng) {
                if sweep_admissible(&spec, &cfg)? {
                    return Ok((spec, cfg, rejected));
                }
            }
            rejected += 1;
        }
    }
}

/// Builds and checks sweep instance `instance_id`. The instance depends only
/// on `(seed, instance_id)`, so instances can be produced in any order.
pub fn sweep_instance(seed: u64, instance_id: u64, shape: &SpecShape, experiments: usize) -> Result<SweepInstance> {
    let mut rng = stream(seed, instance_id);
    let (spec, config, rejected) = sample_assumption_instance(shape, &mut rng)?;
    let schedule = gen_fixed_instance(&spec, experiments, &mut rng)?;
    let theorem1 = verify_theorem1(&schedule, &config, instance_id)?;
    let theorem2 = verify_theorem2(&schedule, &config, instance_id)?;
    Ok(SweepInstance { instance_id, rejected, config, spec, theorem1, theorem2 })
}

/// Settings of the Bernoulli strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Config {
    pub num_classes: u16,
    pub features_per_class: u16,
    /// `p_k ~ U(prob_low, prob_high)`.
    pub prob_low: f64,
    pub prob_high: f64,
    pub chunk_size: usize,
    pub experiments: usize,
    pub gamma: u64,
    pub tau: u32,
    pub test_size: usize,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Self {
            num_classes: 2,
            features_per_class: 50,
            prob_low: 0.0,
            prob_high: 0.2,
            chunk_size: 1000,
            experiments: 50,
            gamma: 50,
            tau: 3,
            test_size: 10_000,
        }
    }
}

impl Figure3Config {
    pub fn framework(&self) -> Result<FrameworkConfig> {
        FrameworkConfig::new(self.num_classes, self.features_per_class, self.tau, self.gamma)
    }
}

/// One strategy's per-experiment series for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySeries {
    pub strategy: StrategyKind,
    pub accuracy: Vec<f64>,
    pub learned: Vec<usize>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Seed {
    pub seed: u64,
    pub strategies: Vec<StrategySeries>,
}

impl Figure3Seed {
    pub fn series(&self, kind: StrategyKind) -> Option<&StrategySeries> {
        self.strategies.iter().find(|s| s.strategy == kind)
    }
}

/// Runs all three strategies on one seed's Bernoulli instance. The test
/// sample is drawn once and shared by every strategy and experiment.
pub fn run_figure3_seed(config: &Figure3Config, seed: u64) -> Result<Figure3Seed> {
    let cfg = config.framework()?;
    if config.test_size == 0 {
        bail!(InvalidConfig, "test size must be positive");
    }
    let spec = BernoulliSpec::uniform_random(
        config.num_classes,
        config.features_per_class,
        config.prob_low,
        config.prob_high,
        config.chunk_size,
        &mut stream(seed, 0),
    )?;
    let schedule = gen_bernoulli_instance(&spec, config.experiments, &mut stream(seed, 1))?;
    let mut test_rng = stream(seed, 2);
    let test: Vec<FeatureCombo> = (0..config.test_size).map(|_| spec.sample_combo(&mut test_rng)).collect();
    let priority = FeaturePriority::lexicographic(&cfg);
    let strategies = StrategyKind::ALL
        .iter()
        .map(|&kind| {
            let records = run_strategy_with(kind, &schedule, &cfg, &priority, |l| {
                Some(TestAccuracy::Estimated(accuracy_on_combos(l, &test, &cfg)))
            });
            StrategySeries {
                strategy: kind,
                accuracy: records.iter().map(|r| r.test_accuracy.map_or(0.0, |a| a.to_f64())).collect(),
                learned: records.iter().map(|r| r.learned_count).collect(),
                active: records.iter().map(|r| r.active_at_start).collect(),
            }
        })
        .collect();
    Ok(Figure3Seed { seed, strategies })
}

/// Mean and population standard deviation across seeds, per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SeriesStats {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let len = rows.first().map_or(0, Vec::len);
        let count = rows.len() as f64;
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for j in 0..len {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / count;
            let var = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / count;
            mean[j] = m;
            std[j] = num_traits::Float::sqrt(var);
        }
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub accuracy: SeriesStats,
    pub learned: SeriesStats,
    pub active: SeriesStats,
    /// Last-experiment accuracy of each seed, in seed order.
    pub final_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Report {
    pub config: Figure3Config,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategySummary>,
}

impl Figure3Report {
    pub fn summary(&self, kind: StrategyKind) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.strategy == kind)
    }
}

/// Aggregates per-seed runs, sorted by seed.
pub fn aggregate_figure3(config: &Figure3Config, runs: &[Figure3Seed]) -> Result<Figure3Report> {
    if runs.is_empty() {
        bail!(InvalidConfig, "no seeds to aggregate");
    }
    let mut runs: Vec<&Figure3Seed> = runs.iter().collect();
    runs.sort_by_key(|r| r.seed);
    let to_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let mut strategies = Vec::new();
    for kind in StrategyKind::ALL {
        let series: Vec<&StrategySeries> = runs
            .iter()
            .map(|r| r.series(kind).ok_or_else(|| crate::Error::InvalidData(alloc::format!("seed {} lacks {kind}", r.seed))))
            .collect::<Result<_>>()?;
        let acc: Vec<Vec<f64>> = series.iter().map(|s| s.accuracy.clone()).collect();
        strategies.push(StrategySummary {
            strategy: kind,
            accuracy: SeriesStats::from_rows(&acc),
            learned: SeriesStats::from_rows(&series.iter().map(|s| to_f64(&s.learned)).collect::<Vec<_>>()),
            active: SeriesStats::from_rows(&series.iter().map(|s| to_f64(&s.active)).collect::<Vec<_>>()),
            final_accuracy: acc.iter().map(|a| a.last().copied().unwrap_or(0.0)).collect(),
        });
    }
    Ok(Figure3Report { config: config.clone(), seeds: runs.iter().map(|r| r.seed).collect(), strategies })
}

/// Runs every seed in turn and aggregates.
pub fn run_figure3_experiment(config: &Figure3Config, seeds: &[u64]) -> Result<Figure3Report> {
    let runs = seeds.iter().map(|&s| run_figure3_seed(config, s)).collect::<Result<Vec<_>>>()?;
    aggregate_figure3(config, &runs)
}

/// A hand-built instance with a name, for quick checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInstance {
    pub name: String,
    pub config: FrameworkConfig,
    pub spec: FixedCountSpec,
}

fn named(name: &str, config: FrameworkConfig, per_class: &[(&[u16], u64)]) -> Result<NamedInstance> {
    let mut counts = crate::strategies::Population::new();
    for c in 0..config.num_classes {
        for &(idx, n) in per_class {
            counts.insert(FeatureCombo::from_indices(c, idx)?, n);
        }
    }
    Ok(NamedInstance { name: name.into(), config, spec: FixedCountSpec::new(counts)? })
}

/// Small instances whose behaviour has been worked out by hand.
pub fn builtin_suite() -> Result<Vec<NamedInstance>> {
    Ok(vec![
        named("nested", FrameworkConfig::new(2, 3, 2, 2)?, &[(&[0, 1], 3), (&[0], 1), (&[2], 1)])?,
        named("nested-three-classes", FrameworkConfig::new(3, 3, 2, 2)?, &[(&[0, 1], 3), (&[0], 1), (&[2], 1)])?,
        named("completed", FrameworkConfig::new(2, 3, 2, 3)?, &[(&[0, 1], 3), (&[0], 1), (&[2], 1), (&[0, 2], 1)])?,
        named("single-feature", FrameworkConfig::new(2, 2, 1, 3)?, &[(&[0], 4), (&[1], 1), (&[], 1)])?,
    ])
}
