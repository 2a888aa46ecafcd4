//! A deliberately naive re-implementation of the discrete training process,
//! used as an oracle. It recomputes everything from scratch at every step and
//! shares no code with the crate beyond reading its inputs.
#![allow(dead_code)]

use std::collections::BTreeSet;

use plasticity_core::framework::{FeatureCombo, FrameworkConfig};
use plasticity_core::instance::FixedCountSpec;
use plasticity_core::strategies::{ExperimentSchedule, Population, RunRecord, StrategyKind};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct NaivePoint {
    pub id: u64,
    pub class: u16,
    pub features: Vec<u16>,
}

pub type Feature = (u16, u16);

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveRecord {
    pub active_at_start: usize,
    pub data_size: usize,
    pub learned: BTreeSet<Feature>,
    pub order: Vec<Feature>,
    pub memorized: usize,
}

pub fn to_naive(schedule: &ExperimentSchedule) -> Vec<Vec<NaivePoint>> {
    schedule
        .chunks()
        .iter()
        .map(|c| {
            c.points()
                .iter()
                .map(|p| NaivePoint { id: p.id.0, class: p.label(), features: p.combo().features().map(|f| f.index).collect() })
                .collect()
        })
        .collect()
}

fn classified(p: &NaivePoint, learned: &BTreeSet<Feature>, tau: u32) -> bool {
    p.features.iter().filter(|&&k| learned.contains(&(p.class, k))).count() as u32 >= tau
}

fn active<'a>(data: &'a [NaivePoint], learned: &BTreeSet<Feature>, memorized: &BTreeSet<u64>, tau: u32) -> Vec<&'a NaivePoint> {
    data.iter().filter(|p| !memorized.contains(&p.id) && !classified(p, learned, tau)).collect()
}

/// Learns the most frequent unlearned feature among active points while its
/// count reaches `gamma` (ties to the smallest `(class, index)`), otherwise
/// memorizes every active point and stops.
pub fn naive_train(
    data: &[NaivePoint],
    learned: &mut BTreeSet<Feature>,
    memorized: &mut BTreeSet<u64>,
    cfg: &FrameworkConfig,
) -> Vec<Feature> {
    let mut order = Vec::new();
    loop {
        let act = active(data, learned, memorized, cfg.tau);
        if act.is_empty() {
            return order;
        }
        let mut best: Option<(u64, Feature)> = None;
        for c in 0..cfg.num_classes {
            for k in 0..cfg.features_per_class {
                if learned.contains(&(c, k)) {
                    continue;
                }
                let count = act.iter().filter(|p| p.class == c && p.features.contains(&k)).count() as u64;
                if best.is_none_or(|(b, _)| count > b) {
                    best = Some((count, (c, k)));
                }
            }
        }
        match best {
            Some((count, f)) if count >= cfg.gamma => {
                learned.insert(f);
                order.push(f);
            }
            _ => {
                memorized.extend(act.iter().map(|p| p.id));
                return order;
            }
        }
    }
}

pub fn naive_strategy(kind: StrategyKind, chunks: &[Vec<NaivePoint>], cfg: &FrameworkConfig) -> Vec<NaiveRecord> {
    let mut data = Vec::new();
    let mut learned = BTreeSet::new();
    let mut memorized = BTreeSet::new();
    let mut out = Vec::new();
    for chunk in chunks {
        data.extend(chunk.iter().cloned());
        match kind {
            StrategyKind::Cold => {
                learned.clear();
                memorized.clear();
            }
            StrategyKind::Ideal => memorized.clear(),
            StrategyKind::Warm => {}
        }
        let active_at_start = active(&data, &learned, &memorized, cfg.tau).len();
        let order = naive_train(&data, &mut learned, &mut memorized, cfg);
        out.push(NaiveRecord { active_at_start, data_size: data.len(), learned: learned.clone(), order, memorized: memorized.len() });
    }
    out
}

/// Compares a crate run with the oracle; returns a description of the first difference.
pub fn compare_records(records: &[RunRecord], naive: &[NaiveRecord]) -> Result<(), String> {
    if records.len() != naive.len() {
        return Err(format!("{} records vs {} naive", records.len(), naive.len()));
    }
    for (r, n) in records.iter().zip(naive) {
        let learned: BTreeSet<Feature> = r.learned.iter().map(|f| (f.class, f.index)).collect();
        let order: Vec<Feature> = r.learn_order.iter().map(|f| (f.class, f.index)).collect();
        let got = (r.active_at_start, r.data_size, &learned, &order, r.memorized_count);
        let want = (n.active_at_start, n.data_size, &n.learned, &n.order, n.memorized);
        if got != want {
            return Err(format!("experiment {}: {got:?} vs {want:?}", r.experiment));
        }
    }
    Ok(())
}

/// Exact population accuracy as `(numerator, denominator)`: well-classified
/// points score 1, the rest score `1/C`.
pub fn naive_accuracy(learned: &BTreeSet<Feature>, spec: &FixedCountSpec, cfg: &FrameworkConfig) -> (u128, u128) {
    let c = cfg.num_classes as u128;
    let mut num = 0u128;
    let mut n = 0u128;
    for (combo, &count) in spec.counts() {
        let hits = combo.features().filter(|f| learned.contains(&(f.class, f.index))).count() as u32;
        num += if hits >= cfg.tau { c * count as u128 } else { count as u128 };
        n += count as u128;
    }
    (num, c * n)
}

/// `a/b == c/d` without reducing.
pub fn same_ratio(a: (u128, u128), numer: i64, denom: i64) -> bool {
    a.0 * denom as u128 == numer as u128 * a.1
}

/// C in 2..=3, K in 2..=5, small tau and gamma.
pub fn small_config<R: Rng>(rng: &mut R) -> FrameworkConfig {
    let c = rng.random_range(2..=3);
    let k = rng.random_range(2..=5);
    let tau = rng.random_range(1..=2u32.min(k as u32 - 1));
    let gamma = rng.random_range(1..=4);
    FrameworkConfig::new(c, k, tau, gamma).unwrap()
}

/// At most 12 points per chunk over random combos.
pub fn small_fixed_spec<R: Rng>(cfg: &FrameworkConfig, rng: &mut R) -> FixedCountSpec {
    let mut counts = Population::new();
    let total = rng.random_range(1..=12u64);
    for _ in 0..total {
        let class = rng.random_range(0..cfg.num_classes);
        let idx: Vec<u16> = (0..cfg.features_per_class).filter(|_| rng.random_bool(0.4)).collect();
        *counts.entry(FeatureCombo::from_indices(class, &idx).unwrap()).or_insert(0) += 1;
    }
    FixedCountSpec::new(counts).unwrap()
}
