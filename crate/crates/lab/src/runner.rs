//! Orchestration behind each subcommand, free of argument parsing.

use std::path::Path;
use std::time::Instant;

use plasticity_core::expanding::{gen_feature_noise_dataset, split_chunks, Clock, ExpandingRun, InitAction};
use plasticity_core::framework::{FeatureCombo, FeatureId, FeaturePriority, FrameworkConfig};
use plasticity_core::instance::{gen_bernoulli_instance, gen_fixed_instance, BernoulliSpec, FixedCountSpec, SpecShape};
use plasticity_core::nn::LabeledDataset;
use plasticity_core::rng::stream;
use plasticity_core::strategies::{
    accuracy_exact, accuracy_on_combos, run_strategy_with, ComboSampler, ExperimentSchedule, StrategyKind, TestAccuracy,
};
use plasticity_core::theorems::{
    aggregate_figure3, builtin_suite, run_figure3_seed, sample_assumption_instance, sweep_instance, verify_theorem1,
    verify_theorem2, Figure3Report, TheoremReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSection, MethodName, RunConfig};
use crate::data::read_dataset;
use crate::error::{LabError, Result};
use crate::output::JobRow;

/// Wall time since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Runs `f` on a pool of `workers` threads, or rayon's default pool size when `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(LabError::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| LabError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn with_classes(data: LabeledDataset<f32>, classes: usize) -> Result<LabeledDataset<f32>> {
    if data.num_classes() == classes {
        return Ok(data);
    }
    Ok(LabeledDataset::new(data.dim(), classes, data.features().to_vec(), data.labels().to_vec())?)
}

/// Training chunks and test set for one seed.
pub fn neural_data(cfg: &RunConfig, seed: u64) -> Result<(Vec<LabeledDataset<f32>>, LabeledDataset<f32>)> {
    match &cfg.dataset {
        DatasetSection::Synthetic(s) => Ok(gen_feature_noise_dataset(&s.spec(cfg.chunk_count), seed)?),
        DatasetSection::Csv { train, test } => {
            let tr = read_dataset(train, None)?;
            let te = read_dataset(test, None)?;
            if tr.dim() != te.dim() {
                return Err(LabError::Config(format!(
                    "{} has {} features but {} has {}",
                    train.display(),
                    tr.dim(),
                    test.display(),
                    te.dim()
                )));
            }
            let classes = tr.num_classes().max(te.num_classes());
            let tr = with_classes(tr, classes)?;
            Ok((split_chunks(&tr, cfg.chunk_count)?, with_classes(te, classes)?))
        }
    }
}

/// What a method did before one experiment, for the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitEvent {
    pub method: String,
    pub seed: u64,
    pub experiment: usize,
    #[serde(flatten)]
    pub action: InitAction,
}

/// Every `(method, seed)` job, sorted by method, seed and experiment.
pub fn run_neural(cfg: &RunConfig, workers: Option<usize>) -> Result<(Vec<JobRow>, Vec<InitEvent>)> {
    let jobs: Vec<(MethodName, u64)> =
        cfg.method_list().into_iter().flat_map(|m| cfg.seeds().into_iter().map(move |s| (m, s))).collect();
    let results = with_workers(workers, || {
        jobs.par_iter().map(|&(m, seed)| run_job(cfg, m, seed)).collect::<Result<Vec<_>>>()
    })??;
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for (r, e) in results {
        rows.extend(r);
        events.extend(e);
    }
    rows.sort_by(|a, b| (&a.method, a.seed, a.row.experiment).cmp(&(&b.method, b.seed, b.row.experiment)));
    events.sort_by(|a, b| (&a.method, a.seed, a.experiment).cmp(&(&b.method, b.seed, b.experiment)));
    Ok((rows, events))
}

fn run_job(cfg: &RunConfig, method: MethodName, seed: u64) -> Result<(Vec<JobRow>, Vec<InitEvent>)> {
    let (chunks, test) = neural_data(cfg, seed)?;
    let mut run = ExpandingRun::new(cfg.protocol(method, seed)?, &chunks, &test)?;
    let clock = WallClock::start();
    let mut rows = Vec::with_capacity(chunks.len());
    let mut events = Vec::with_capacity(chunks.len());
    while !run.is_done() {
        let (action, row) = run.step(&clock)?;
        events.push(InitEvent { method: method.as_str().into(), seed, experiment: row.experiment, action });
        rows.push(JobRow { method: method.as_str().into(), seed, row });
    }
    Ok((rows, events))
}

/// A fixed-count instance as stored by `gen-instance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub rejected: u64,
    pub config: FrameworkConfig,
    pub spec: FixedCountSpec,
}

pub fn gen_instance(seed: u64) -> Result<InstanceFile> {
    let (spec, config, rejected) = sample_assumption_instance(&SpecShape::SMALL, &mut stream(seed, 0))?;
    Ok(InstanceFile { seed, rejected, config, spec })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub experiment: usize,
    pub data_size: usize,
    pub active: usize,
    pub learned: usize,
    pub memorized: usize,
    pub test_acc: f64,
    /// Exact accuracy as `p/q` when the population is known.
    pub test_acc_exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub experiment: usize,
    pub learned_at_start: Vec<FeatureId>,
    pub learn_order: Vec<FeatureId>,
}

enum Population {
    Fixed(FixedCountSpec),
    Sample(Vec<FeatureCombo>),
}

/// Framework strategies for every seed: on the configured instance file if
/// there is one, otherwise on a Bernoulli population drawn per seed.
pub fn run_simulate(cfg: &RunConfig) -> Result<(Vec<SimRow>, Vec<SimTrace>)> {
    let f = &cfg.framework;
    let instance: Option<InstanceFile> = f.instance.as_deref().map(crate::output::read_json).transpose()?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for seed in cfg.seeds() {
        let (fcfg, schedule, population): (FrameworkConfig, ExperimentSchedule, Population) = match &instance {
            Some(inst) => {
                let schedule = gen_fixed_instance(&inst.spec, f.experiments, &mut stream(seed, 1))?;
                (inst.config, schedule, Population::Fixed(inst.spec.clone()))
            }
            None => {
                let fcfg = FrameworkConfig::new(f.classes, f.features, f.tau, f.gamma)?;
                let spec =
                    BernoulliSpec::uniform_random(f.classes, f.features, f.prob_low, f.prob_high, f.chunk_size, &mut stream(seed, 0))?;
                let schedule = gen_bernoulli_instance(&spec, f.experiments, &mut stream(seed, 1))?;
                if f.test_points == 0 {
                    return Err(LabError::Config("framework.test_points must be positive".into()));
                }
                let mut rng = stream(seed, 2);
                let test = (0..f.test_points).map(|_| spec.sample_combo(&mut rng)).collect();
                (fcfg, schedule, Population::Sample(test))
            }
        };
        let priority = FeaturePriority::lexicographic(&fcfg);
        for &kind in &f.strategies {
            let records = run_strategy_with(kind, &schedule, &fcfg, &priority, |l| match &population {
                Population::Fixed(spec) => accuracy_exact(l, spec.counts(), &fcfg).ok().map(TestAccuracy::Exact),
                Population::Sample(test) => Some(TestAccuracy::Estimated(accuracy_on_combos(l, test, &fcfg))),
            });
            for r in records {
                let (test_acc, test_acc_exact) = match r.test_accuracy {
                    Some(TestAccuracy::Exact(q)) => (r.test_accuracy.map_or(f64::NAN, |a| a.to_f64()), Some(q.to_string())),
                    Some(a) => (a.to_f64(), None),
                    None => (f64::NAN, None),
                };
                traces.push(SimTrace {
                    strategy: kind,
                    seed,
                    experiment: r.experiment,
                    learned_at_start: r.learned_at_start.iter().collect(),
                    learn_order: r.learn_order.clone(),
                });
                rows.push(SimRow {
                    strategy: kind,
                    seed,
                    experiment: r.experiment,
                    data_size: r.data_size,
                    active: r.active_at_start,
                    learned: r.learned_count,
                    memorized: r.memorized_count,
                    test_acc,
                    test_acc_exact,
                });
            }
        }
    }
    Ok((rows, traces))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckedInstance {
    pub instance_id: u64,
    pub name: String,
    pub config: FrameworkConfig,
    pub spec: FixedCountSpec,
    pub theorem1: TheoremReport,
    pub theorem2: TheoremReport,
}

impl CheckedInstance {
    pub fn violations(&self) -> usize {
        self.theorem1.violations() + self.theorem2.violations()
    }

    pub fn unmet(&self) -> bool {
        !self.theorem1.precondition_met() || !self.theorem2.precondition_met()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// `builtin` or `sweep`.
    pub suite: String,
    pub seed: u64,
    pub experiments: usize,
    pub instances: Vec<CheckedInstance>,
    pub claims_checked: usize,
    pub violations: usize,
    pub unmet_preconditions: usize,
}

impl VerifyReport {
    fn new(suite: &str, seed: u64, experiments: usize, instances: Vec<CheckedInstance>) -> Self {
        let claims_checked = instances.iter().map(|i| i.theorem1.claims.len() + i.theorem2.claims.len()).sum();
        Self {
            suite: suite.into(),
            seed,
            experiments,
            claims_checked,
            violations: instances.iter().map(CheckedInstance::violations).sum(),
            unmet_preconditions: instances.iter().filter(|i| i.unmet()).count(),
            instances,
        }
    }

    /// `(instance, claim name, experiment)` of every violated claim.
    pub fn failures(&self) -> Vec<(u64, String, Option<usize>)> {
        self.instances
            .iter()
            .flat_map(|i| {
                i.theorem1.failed_claims().chain(i.theorem2.failed_claims()).map(move |c| (i.instance_id, c.name.clone(), c.experiment))
            })
            .collect()
    }
}

/// Both theorem checks on the hand-built instances.
pub fn verify_builtin(seed: u64, experiments: usize) -> Result<VerifyReport> {
    let mut out = Vec::new();
    for (id, inst) in builtin_suite()?.into_iter().enumerate() {
        let schedule = gen_fixed_instance(&inst.spec, experiments, &mut stream(seed, id as u64))?;
        out.push(CheckedInstance {
            instance_id: id as u64,
            theorem1: verify_theorem1(&schedule, &inst.config, id as u64)?,
            theorem2: verify_theorem2(&schedule, &inst.config, id as u64)?,
            name: inst.name,
            config: inst.config,
            spec: inst.spec,
        });
    }
    Ok(VerifyReport::new("builtin", seed, experiments, out))
}

/// Both theorem checks on `count` rejection-sampled instances.
pub fn verify_sweep(seed: u64, count: u64, experiments: usize, workers: Option<usize>) -> Result<VerifyReport> {
    let instances = with_workers(workers, || {
        (0..count)
            .into_par_iter()
            .map(|id| {
                let s = sweep_instance(seed, id, &SpecShape::SMALL, experiments)?;
                Ok(CheckedInstance {
                    instance_id: id,
                    name: format!("sweep-{id}"),
                    config: s.config,
                    spec: s.spec,
                    theorem1: s.theorem1,
                    theorem2: s.theorem2,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(VerifyReport::new("sweep", seed, experiments, instances))
}

pub fn run_figure3(cfg: &RunConfig, workers: Option<usize>) -> Result<Figure3Report> {
    let fig = cfg.framework.figure3();
    let seeds = cfg.seeds();
    let runs = with_workers(workers, || seeds.par_iter().map(|&s| run_figure3_seed(&fig, s)).collect::<Result<Vec<_>, _>>())??;
    Ok(aggregate_figure3(&fig, &runs)?)
}

/// Writes `train.csv` (chunks in order), `test.csv` and `dataset.json`.
pub fn gen_dataset(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let DatasetSection::Synthetic(s) = &cfg.dataset else {
        return Err(LabError::Config("gen-dataset needs a synthetic dataset section".into()));
    };
    let spec = s.spec(cfg.chunk_count);
    let (chunks, test) = gen_feature_noise_dataset(&spec, cfg.seed)?;
    let mut train = LabeledDataset::empty(spec.input_dim(), spec.classes)?;
    for c in &chunks {
        train.extend(c)?;
    }
    crate::output::ensure_dir(dir)?;
    crate::data::write_dataset(&dir.join("train.csv"), &train)?;
    crate::data::write_dataset(&dir.join("test.csv"), &test)?;
    crate::output::write_json(&dir.join("dataset.json"), &(cfg.seed, &spec))
}
