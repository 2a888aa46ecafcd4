//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL line
//! for each and exits non-zero if any failed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{compare_records, naive_accuracy, naive_strategy, small_config, small_fixed_spec, to_naive, Feature, NaiveRecord};
use plasticity_core::framework::FrameworkConfig;
use plasticity_core::instance::{
    gen_bernoulli_instance, gen_fixed_instance, random_complete_spec, BernoulliSpec, FixedCountSpec, SpecShape,
};
use plasticity_core::nn::{loss_and_grad_rows, DenseNet};
use plasticity_core::reinit::{chunk_gradient, cosine_alignment, dash_apply, ema_chunk_gradients};
use plasticity_core::rng::stream;
use plasticity_core::strategies::{accuracy_exact, run_strategy, StrategyKind};
use plasticity_core::theorems::{
    aggregate_figure3, lemma_acc_pair_valid, run_figure3_seed, sample_acc_pair, sample_assumption_instance,
    verify_lemma_acc_monotone, verify_lemma_order, Figure3Config,
};
use plasticity_core::nn::LabeledDataset;
use plasticity_lab::config::{MethodName, RunConfig};
use plasticity_lab::output::summarize;
use plasticity_lab::runner::{run_neural, verify_sweep, VerifyReport};
use rand::Rng;

const SWEEP_SEED: u64 = 42;
const SWEEP_INSTANCES: u64 = 200;
const SWEEP_J: usize = 12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Sweep instances rebuilt from their seeds, with the oracle's records.
struct SweepCase {
    id: u64,
    cfg: FrameworkConfig,
    spec: FixedCountSpec,
    cold: Vec<NaiveRecord>,
    warm: Vec<NaiveRecord>,
    ideal: Vec<NaiveRecord>,
}

struct Sweep {
    report: VerifyReport,
    seconds: f64,
    cases: Vec<SweepCase>,
}

fn run_sweep() -> Sweep {
    let t = Instant::now();
    let report = verify_sweep(SWEEP_SEED, SWEEP_INSTANCES, SWEEP_J, None).expect("sweep");
    let seconds = t.elapsed().as_secs_f64();
    let cases = (0..SWEEP_INSTANCES)
        .map(|id| {
            let mut rng = stream(SWEEP_SEED, id);
            let (spec, cfg, _) = sample_assumption_instance(&SpecShape::SMALL, &mut rng).unwrap();
            let schedule = gen_fixed_instance(&spec, SWEEP_J, &mut rng).unwrap();
            let chunks = to_naive(&schedule);
            SweepCase {
                id,
                cold: naive_strategy(StrategyKind::Cold, &chunks, &cfg),
                warm: naive_strategy(StrategyKind::Warm, &chunks, &cfg),
                ideal: naive_strategy(StrategyKind::Ideal, &chunks, &cfg),
                cfg,
                spec,
            }
        })
        .collect();
    Sweep { report, seconds, cases }
}

fn time(records: &[NaiveRecord], j: usize) -> usize {
    records[..j].iter().map(|r| r.active_at_start).sum()
}

/// `a < b` for fractions `(numerator, denominator)`.
fn less(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 < b.0 * a.1
}

/// Largest per-chunk count of an unlearned feature among points `g` leaves
/// unclassified, i.e. `δ·n`.
fn delta_n(case: &SweepCase, g: &BTreeSet<Feature>) -> u64 {
    let mut best = 0;
    for c in 0..case.cfg.num_classes {
        for k in 0..case.cfg.features_per_class {
            if g.contains(&(c, k)) {
                continue;
            }
            let mut count = 0;
            for (combo, &n) in case.spec.counts() {
                let feats: Vec<u16> = combo.features().map(|f| f.index).collect();
                let hits = feats.iter().filter(|&&i| g.contains(&(combo.class(), i))).count() as u32;
                if combo.class() == c && feats.contains(&k) && hits < case.cfg.tau {
                    count += n;
                }
            }
            best = best.max(count);
        }
    }
    best
}

fn criterion1(sweep: &Sweep) -> Outcome {
    let harness: usize = sweep.report.instances.iter().map(|i| i.theorem1.violations()).sum();
    let unmet = sweep.report.instances.iter().filter(|i| !i.theorem1.precondition_met()).count();
    let (mut claims, mut strict, mut bad) = (0, 0, Vec::new());
    for case in &sweep.cases {
        let g = &case.cold[0].learned;
        let dn = delta_n(case, g);
        for j in 1..=SWEEP_J {
            let (w, c) = (&case.warm[j - 1], &case.cold[j - 1]);
            claims += 1;
            if &w.learned != g {
                bad.push(format!("{}: L_warm != G at J={j}", case.id));
            }
            if j < 2 {
                continue;
            }
            let aw = naive_accuracy(&w.learned, &case.spec, &case.cfg);
            let ac = naive_accuracy(&c.learned, &case.spec, &case.cfg);
            claims += 2;
            if less(ac, aw) {
                bad.push(format!("{}: ACC_warm > ACC_cold at J={j}", case.id));
            }
            if time(&case.warm, j) >= time(&case.cold, j) {
                bad.push(format!("{}: T_warm >= T_cold at J={j}", case.id));
            }
            // J > γ/(δn)
            if dn > 0 && j as u64 * dn > case.cfg.gamma {
                strict += 1;
                claims += 1;
                if !less(aw, ac) {
                    bad.push(format!("{}: no strict gap at J={j}", case.id));
                }
            }
        }
    }
    let pass = harness == 0 && unmet == 0 && bad.is_empty() && strict > 0 && sweep.seconds < 60.0;
    outcome(
        pass,
        format!(
            "{} instances, {claims} oracle claims ({strict} strict), harness violations {harness}, oracle violations {}, unmet {unmet}, sweep {:.1} s{}",
            sweep.cases.len(),
            bad.len(),
            sweep.seconds,
            bad.first().map_or(String::new(), |b| format!("; first: {b}"))
        ),
    )
}

fn criterion2(sweep: &Sweep) -> Outcome {
    let harness: usize = sweep.report.instances.iter().map(|i| i.theorem2.violations()).sum();
    let unmet = sweep.report.instances.iter().filter(|i| !i.theorem2.precondition_met()).count();
    let (mut claims, mut bad) = (0, Vec::new());
    let mut failing_instances = BTreeSet::new();
    for case in &sweep.cases {
        for j in 1..=SWEEP_J {
            claims += 1;
            if case.ideal[j - 1].learned != case.cold[j - 1].learned {
                bad.push(format!("{}: L_ideal != L_cold at J={j}", case.id));
                failing_instances.insert(case.id);
            }
            if j < 2 {
                continue;
            }
            let (tw, ti, tc) = (time(&case.warm, j), time(&case.ideal, j), time(&case.cold, j));
            claims += 1;
            if !(tw < ti && ti < tc) {
                bad.push(format!("{}: T warm/ideal/cold = {tw}/{ti}/{tc} at J={j}", case.id));
                failing_instances.insert(case.id);
            }
        }
    }
    let pass = harness == 0 && unmet == 0 && bad.is_empty() && sweep.seconds < 60.0;
    outcome(
        pass,
        format!(
            "{claims} oracle claims, harness violations {harness}, oracle violations {} on instances {failing_instances:?}, unmet {unmet}, sweep {:.1} s{}",
            bad.len(),
            sweep.seconds,
            bad.first().map_or(String::new(), |b| format!("; first: {b}"))
        ),
    )
}

/// J values where the oracle's cold time differs from `n·J(J+1)/2`.
fn closed_form_misses(cold: &[NaiveRecord], n: usize) -> Vec<usize> {
    (1..=cold.len()).filter(|&j| time(cold, j) != n * j * (j + 1) / 2).collect()
}

fn criterion3(sweep: &Sweep) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for case in &sweep.cases {
        checked += case.cold.len();
        bad.extend(closed_form_misses(&case.cold, case.spec.chunk_size() as usize).iter().map(|j| format!("sweep-{} J={j}", case.id)));
    }
    for id in 0..100 {
        let mut rng = stream(3, id);
        let cfg = small_config(&mut rng);
        let spec = small_fixed_spec(&cfg, &mut rng);
        let n = spec.chunk_size() as usize;
        let schedule = gen_fixed_instance(&spec, 8, &mut rng).unwrap();
        let cold = naive_strategy(StrategyKind::Cold, &to_naive(&schedule), &cfg);
        checked += cold.len() + 1;
        bad.extend(closed_form_misses(&cold, n).iter().map(|j| format!("random-{id} J={j}")));
        let crate_time: usize = run_strategy(StrategyKind::Cold, &schedule, &cfg).iter().map(|r| r.active_at_start).sum();
        if crate_time != n * 36 {
            bad.push(format!("random-{id} crate run"));
        }
    }
    outcome(bad.is_empty(), format!("{checked} (instance, J) checks, {} mismatches {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()))
}

fn criterion4() -> Outcome {
    // Lemma 1 on complete specs: 50 specs, 10 pairs each.
    let (mut pairs, mut lemma1_bad, mut harness1) = (0, 0, 0);
    for id in 0..50 {
        let mut rng = stream(44, id);
        let k = rng.random_range(2..=4);
        let cfg = FrameworkConfig::new(rng.random_range(2..=3), k, rng.random_range(1..k as u32), 2).unwrap();
        let spec = random_complete_spec(&cfg, 5, &mut rng).unwrap();
        for _ in 0..10 {
            let (a, b) = sample_acc_pair(&cfg, &mut rng);
            assert!(lemma_acc_pair_valid(&a, &b, &cfg));
            let to_set = |s: &plasticity_core::framework::FeatureSet| s.iter().map(|f| (f.class, f.index)).collect::<BTreeSet<_>>();
            let (na, nb) = (naive_accuracy(&to_set(&a), &spec, &cfg), naive_accuracy(&to_set(&b), &spec, &cfg));
            let (ca, cb) = (accuracy_exact(&a, spec.counts(), &cfg).unwrap(), accuracy_exact(&b, spec.counts(), &cfg).unwrap());
            pairs += 1;
            if !less(na, nb) || ca >= cb {
                lemma1_bad += 1;
            }
        }
        let report = verify_lemma_acc_monotone(&spec, &cfg, 10, &mut rng, id).unwrap();
        harness1 += report.violations() + usize::from(!report.precondition_met());
    }
    // Lemmas 2 and 3: 50 sweep-style instances, 10 tie-break orders each.
    let (mut claims, mut harness2) = (0, 0);
    for id in 0..50 {
        let mut rng = stream(45, id);
        let (spec, cfg, _) = sample_assumption_instance(&SpecShape::SMALL, &mut rng).unwrap();
        let schedule = gen_fixed_instance(&spec, 6, &mut rng).unwrap();
        let report = verify_lemma_order(&schedule, &cfg, 10, &mut rng, id).unwrap();
        claims += report.claims.len();
        harness2 += report.violations() + usize::from(!report.precondition_met());
    }
    outcome(
        pairs == 500 && lemma1_bad == 0 && harness1 == 0 && harness2 == 0 && claims > 0,
        format!("lemma 1: {pairs} pairs, {lemma1_bad} oracle + {harness1} harness failures; lemmas 2/3: 50 instances x 10 orders, {claims} claims, {harness2} failures"),
    )
}

fn criterion5() -> Outcome {
    let config = Figure3Config::default();
    let t = Instant::now();
    let runs: Vec<_> = (0..10).map(|s| run_figure3_seed(&config, s).unwrap()).collect();
    let seconds = t.elapsed().as_secs_f64();
    let report = aggregate_figure3(&config, &runs).unwrap();

    let series = |r: &plasticity_core::theorems::Figure3Seed, k| r.series(k).unwrap().clone();
    let a_ok = runs
        .iter()
        .filter(|r| series(r, StrategyKind::Warm).accuracy.last() < series(r, StrategyKind::Ideal).accuracy.last())
        .count();

    let mut gap = 0.0;
    let mut terms = 0.0;
    for r in &runs {
        let (i, c) = (series(r, StrategyKind::Ideal).accuracy, series(r, StrategyKind::Cold).accuracy);
        for (x, y) in i.iter().zip(&c) {
            gap += (x - y).abs();
            terms += 1.0;
        }
    }
    let gap = gap / terms;

    let active = |k| report.summary(k).unwrap().active.mean.clone();
    let (w, i, c) = (active(StrategyKind::Warm), active(StrategyKind::Ideal), active(StrategyKind::Cold));
    let order_bad: Vec<usize> = (1..w.len()).filter(|&j| !(w[j] < i[j] && i[j] < c[j])).map(|j| j + 1).collect();

    outcome(
        a_ok == 10 && gap <= 0.01 && order_bad.is_empty() && seconds < 300.0,
        format!(
            "(a) warm < ideal final in {a_ok}/10 seeds; (b) mean |ideal - cold| = {gap:.5}; (c) ordering fails at j = {order_bad:?}; {seconds:.1} s"
        ),
    )
}

fn criterion6() -> Outcome {
    let (mut instances, mut bad) = (0, Vec::new());
    for id in 0..100u64 {
        let mut rng = stream(46, id);
        let cfg = small_config(&mut rng);
        let j = rng.random_range(1..=4);
        let schedule = if id % 2 == 0 {
            let spec = small_fixed_spec(&cfg, &mut rng);
            gen_fixed_instance(&spec, j, &mut rng).unwrap()
        } else {
            let probs = (0..cfg.features_per_class).map(|_| rng.random_range(0.0..0.8)).collect();
            let spec = BernoulliSpec::new(cfg.num_classes, probs, rng.random_range(1..=12)).unwrap();
            gen_bernoulli_instance(&spec, j, &mut rng).unwrap()
        };
        let chunks = to_naive(&schedule);
        for kind in StrategyKind::ALL {
            if let Err(e) = compare_records(&run_strategy(kind, &schedule, &cfg), &naive_strategy(kind, &chunks, &cfg)) {
                bad.push(format!("{id} {kind}: {e}"));
            }
        }
        instances += 1;
    }
    outcome(bad.is_empty() && instances >= 50, format!("{instances} instances x 3 strategies, {} mismatches {:?}", bad.len(), bad.first()))
}

/// Mean cross-entropy from logits, computed here from scratch.
fn reference_loss(net: &DenseNet<f64>, x: &[f64], y: &[u16]) -> f64 {
    let logits = net.forward(x, y.len()).unwrap();
    let c = net.num_classes();
    let mut total = 0.0;
    for (row, &label) in logits.chunks(c).zip(y) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label as usize];
    }
    total / y.len() as f64
}

fn criterion7() -> Outcome {
    let mut rng = stream(47, 0);
    let mut net = DenseNet::<f64>::he_uniform(&[8, 16, 16, 4], &mut rng).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for _ in 0..5 {
        let x: Vec<f64> = (0..16 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<u16> = (0..16).map(|_| rng.random_range(0..4)).collect();
        let (loss, grad) = loss_and_grad_rows(&net, &x, &y).unwrap();
        assert!((loss - reference_loss(&net, &x, &y)).abs() < 1e-12);
        for _ in 0..20 {
            let i = rng.random_range(0..net.params.num_params());
            let orig = net.params.get(i).unwrap();
            *net.params.get_mut(i).unwrap() = orig + h;
            let lp = reference_loss(&net, &x, &y);
            *net.params.get_mut(i).unwrap() = orig - h;
            let lm = reference_loss(&net, &x, &y);
            *net.params.get_mut(i).unwrap() = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grad.get(i).unwrap();
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
            checks += 1;
        }
    }
    outcome(worst < 1e-5, format!("{checks} parameters over 5 batches, max relative error {worst:.3e}"))
}

fn random_data<R: Rng>(n: usize, d: usize, c: usize, rng: &mut R) -> LabeledDataset<f64> {
    let x = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(0..c as u16)).collect();
    LabeledDataset::new(d, c, x, y).unwrap()
}

fn criterion8() -> Outcome {
    let mut bad = Vec::new();
    let (mut neurons, mut worst_cos) = (0usize, 0.0f64);
    for id in 0..100 {
        let mut rng = stream(48, id);
        let d = rng.random_range(2..=10);
        let c = rng.random_range(2..=5);
        let mut dims = vec![d];
        dims.extend((0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=16)));
        dims.push(c);
        let mut net = DenseNet::<f64>::he_uniform(&dims, &mut rng).unwrap();
        let chunks: Vec<_> = (0..rng.random_range(1..=4)).map(|_| random_data(rng.random_range(5..40), d, c, &mut rng)).collect();
        let refs: Vec<&LabeledDataset<f64>> = chunks.iter().collect();
        let alpha = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.05..=1.0);
        let batch = rng.random_range(1..=16);

        let before: Vec<u64> = net.params.iter().map(f64::to_bits).collect();
        let ema = ema_chunk_gradients(&net, &refs, alpha, batch).unwrap();
        if net.params.iter().map(f64::to_bits).collect::<Vec<_>>() != before {
            bad.push(format!("net {id}: ema touched parameters"));
        }
        let last = ema_chunk_gradients(&net, &refs, 1.0, batch).unwrap();
        let direct = chunk_gradient(&net, refs[refs.len() - 1], batch).unwrap();
        if last.grad.iter().map(f64::to_bits).ne(direct.iter().map(f64::to_bits)) {
            bad.push(format!("net {id}: alpha = 1 differs from last-chunk gradient"));
        }

        let old = net.clone();
        dash_apply(&mut net, &ema, lambda).unwrap();
        for (lo, ln) in old.params.layers.iter().zip(&net.params.layers) {
            for r in 0..lo.outputs {
                let (a, b) = (lo.row(r), ln.row(r));
                let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                if na == 0.0 {
                    continue;
                }
                neurons += 1;
                let ratio = nb / na;
                if ratio < lambda - 1e-12 || ratio > 1.0 + 1e-12 {
                    bad.push(format!("net {id}: norm ratio {ratio} outside [{lambda}, 1]"));
                }
                let cos = cosine_alignment(a, b).unwrap();
                worst_cos = worst_cos.max((cos - 1.0).abs());
                if (cos - 1.0).abs() > 1e-12 {
                    bad.push(format!("net {id}: cosine {cos}"));
                }
            }
            if lo.bias != ln.bias {
                bad.push(format!("net {id}: bias changed"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("100 nets, {neurons} neurons, max |cos - 1| {worst_cos:.1e}, {} failures {:?}", bad.len(), bad.first()),
    )
}

fn criterion9() -> Outcome {
    let mut cfg = RunConfig { chunk_count: 10, ..RunConfig::default() };
    cfg.methods = Some(vec![MethodName::Cold, MethodName::Warm, MethodName::Dash]);
    assert_eq!((cfg.dash.alpha, cfg.dash.lambda), (0.3, 0.3));
    let (mut dash_ok, mut steps_ok, mut slowest) = (0, 0, 0.0f64);
    let mut lines = Vec::new();
    for seed in 0..5 {
        cfg.seed = seed;
        let t = Instant::now();
        let (rows, _) = run_neural(&cfg, Some(1)).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let s = summarize(&rows);
        let get = |m: &str| s.iter().find(|x| x.method == m).unwrap();
        let (cold, warm, dash) = (get("cold"), get("warm"), get("dash"));
        dash_ok += usize::from(dash.final_test_acc >= warm.final_test_acc);
        steps_ok += usize::from(warm.mean_total_steps < cold.mean_total_steps);
        lines.push(format!(
            "seed {seed}: acc cold {:.3} warm {:.3} dash {:.3}, steps cold {} warm {}",
            cold.final_test_acc, warm.final_test_acc, dash.final_test_acc, cold.mean_total_steps, warm.mean_total_steps
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    outcome(
        dash_ok >= 4 && steps_ok == 5 && slowest < 600.0,
        format!("dash >= warm final acc in {dash_ok}/5 seeds, warm steps < cold in {steps_ok}/5, slowest seed {slowest:.1} s"),
    )
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plasticity-lab"));
    cmd.env_remove(plasticity_lab::config::SEED_ENV);
    cmd
}

/// CSV text with any `wall_ms` column dropped.
fn without_wall_ms(path: &Path) -> String {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| &header[i] != "wall_ms").collect();
    let mut out = keep.iter().map(|&i| header[i].to_string()).collect::<Vec<_>>().join(",");
    for rec in reader.records() {
        let rec = rec.unwrap();
        out.push('\n');
        out.push_str(&keep.iter().map(|&i| rec[i].to_string()).collect::<Vec<_>>().join(","));
    }
    out
}

fn criterion10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"seed = 5
repeats = 2
chunk_count = 3
methods = ["cold", "warm", "warm_rem", "sp", "dash"]

[network]
hidden = [16]

[dataset]
source = "synthetic"
noise_dim = 20
points_per_chunk = 30
test_points = 200

[framework]
features = 10
chunk_size = 100
experiments = 5
gamma = 8
test_points = 500
"#,
    )
    .unwrap();
    let runs: [(&str, &[&str], &[&str]); 4] = [
        ("train", &[], &["results.csv"]),
        ("simulate", &[], &["simulate.csv"]),
        ("figure3", &["--seeds", "2"], &["figure3.csv"]),
        ("gen-dataset", &[], &["train.csv", "test.csv"]),
    ];
    let mut bad = Vec::new();
    let mut compared = 0;
    for (cmd, extra, files) in runs {
        let outs: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|tag| {
                let out = dir.path().join(format!("{cmd}-{tag}"));
                let mut c = bin();
                c.arg(cmd).arg("--config").arg(&config).arg("--out").arg(&out).args(extra);
                if *tag == "c" {
                    c.args(["--workers", "2"]);
                }
                let status = c.output().unwrap().status;
                assert!(status.success(), "{cmd} exited with {status}");
                out
            })
            .collect();
        for f in files {
            let first = without_wall_ms(&outs[0].join(f));
            for other in &outs[1..] {
                compared += 1;
                if without_wall_ms(&other.join(f)) != first {
                    bad.push(format!("{cmd}/{f}"));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{compared} repeated CSV outputs over 4 commands compared, differing: {bad:?}"))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let started = Instant::now();
    // Panics are reported on the criterion's line.
    std::panic::set_hook(Box::new(|_| {}));
    let sweep = run_sweep();
    let criteria: Vec<Criterion> = vec![
        ("theorem 1 sweep", Box::new(|| criterion1(&sweep))),
        ("theorem 2 sweep", Box::new(|| criterion2(&sweep))),
        ("cold time closed form", Box::new(|| criterion3(&sweep))),
        ("lemma suites", Box::new(criterion4)),
        ("figure 3 orderings", Box::new(criterion5)),
        ("oracle equivalence", Box::new(criterion6)),
        ("gradient check", Box::new(criterion7)),
        ("dash mechanics", Box::new(criterion8)),
        ("desk-scale trend", Box::new(criterion9)),
        ("cli determinism", Box::new(criterion10)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!result.pass);
        println!(
            "acceptance {:>2} {:<22} {} ({:.1} s) {}",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", criteria.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
