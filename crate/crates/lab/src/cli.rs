use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::output::{self, JobRow, Manifest};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "plasticity-lab", version, about = "Warm-start experiments on a discrete feature-learning model and a small MLP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed and PLASTICITY_LAB_SEED.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Worker threads for independent jobs.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_seed_override(self.seed)?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cold, warm and ideal strategies on the discrete model.
    Simulate(Common),
    /// Checks both warm-start theorems exactly.
    VerifyTheorems {
        #[command(flatten)]
        common: Common,
        /// Random assumption-satisfying instances; the built-in suite when omitted.
        #[arg(long, value_name = "N")]
        instances: Option<u64>,
        /// Experiments per instance.
        #[arg(long, value_name = "J", default_value_t = 12)]
        experiments: usize,
    },
    /// Strategy comparison on Bernoulli data, averaged over seeds.
    Figure3 {
        #[command(flatten)]
        common: Common,
        /// Number of seeds; defaults to the configured `repeats`.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
    },
    /// Neural expanding-dataset runs.
    Train(Common),
    /// Samples a fixed-count instance that satisfies the theorem assumptions.
    GenInstance(Common),
    /// Writes the synthetic feature-noise dataset as CSV.
    GenDataset(Common),
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 on usage or config errors, 2 when a theorem claim fails.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::VerifyTheorems { common, instances, experiments } => verify(&common, instances, experiments),
        Command::Figure3 { common, seeds } => figure3(&common, seeds),
        Command::Train(c) => train(&c),
        Command::GenInstance(c) => {
            let cfg = c.load()?;
            let inst = runner::gen_instance(cfg.seed)?;
            output::ensure_dir(&c.out)?;
            let path = c.out.join("instance.json");
            output::write_json(&path, &inst)?;
            println!(
                "instance: C={} K={} tau={} gamma={} n={} ({} proposals rejected) -> {}",
                inst.config.num_classes,
                inst.config.features_per_class,
                inst.config.tau,
                inst.config.gamma,
                inst.spec.chunk_size(),
                inst.rejected,
                path.display()
            );
            Ok(())
        }
        Command::GenDataset(c) => {
            let cfg = c.load()?;
            runner::gen_dataset(&cfg, &c.out)?;
            println!("dataset -> {}", c.out.display());
            Ok(())
        }
    }
}

fn simulate(c: &Common) -> Result<()> {
    let mut cfg = c.load()?;
    cfg.mode = crate::config::Mode::Framework;
    let (rows, traces) = runner::run_simulate(&cfg)?;
    output::ensure_dir(&c.out)?;
    output::write_csv(
        &c.out.join("simulate.csv"),
        &["strategy", "seed", "experiment", "data_size", "active", "learned", "memorized", "test_acc", "test_acc_exact"],
        rows.iter().map(|r| {
            [
                r.strategy.to_string(),
                r.seed.to_string(),
                r.experiment.to_string(),
                r.data_size.to_string(),
                r.active.to_string(),
                r.learned.to_string(),
                r.memorized.to_string(),
                r.test_acc.to_string(),
                r.test_acc_exact.clone().unwrap_or_default(),
            ]
        }),
    )?;
    output::write_jsonl(&c.out.join("trace.jsonl"), &traces)?;
    // The summary treats |N^(j,0)| as the step count of an experiment.
    let as_jobs: Vec<JobRow> = rows
        .iter()
        .map(|r| JobRow {
            method: r.strategy.to_string(),
            seed: r.seed,
            row: plasticity_core::expanding::ResultRow {
                experiment: r.experiment,
                test_accuracy: r.test_acc,
                steps: r.active as u64,
                converged: true,
                wall_ms: 0,
            },
        })
        .collect();
    let summary = output::summarize(&as_jobs);
    for s in &summary {
        println!("{:6} final acc {:.4}  mean acc {:.4}  training time {}", s.method, s.final_test_acc, s.average_test_acc, s.mean_total_steps);
    }
    output::write_json(&c.out.join("manifest.json"), &Manifest::new("simulate", &cfg, summary)?)
}

fn verify(c: &Common, instances: Option<u64>, experiments: usize) -> Result<()> {
    let cfg = c.load()?;
    if experiments == 0 {
        return Err(LabError::Config("--experiments must be at least 1".into()));
    }
    let report = match instances {
        Some(n) => runner::verify_sweep(cfg.seed, n, experiments, c.workers)?,
        None => runner::verify_builtin(cfg.seed, experiments)?,
    };
    output::ensure_dir(&c.out)?;
    let path = c.out.join("theorems.json");
    output::write_json(&path, &report)?;
    output::write_json(&c.out.join("manifest.json"), &Manifest::new("verify-theorems", &cfg, Vec::new())?)?;
    println!(
        "{} suite: {} instances, {} claims checked, {} violations, {} with unmet preconditions -> {}",
        report.suite,
        report.instances.len(),
        report.claims_checked,
        report.violations,
        report.unmet_preconditions,
        path.display()
    );
    let failures = report.failures();
    for (id, name, j) in &failures {
        println!("  instance {id}: {name} failed at J={}", j.map_or("-".to_string(), |j| j.to_string()));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(LabError::Verification(format!("{} claim(s) violated", failures.len())))
    }
}

fn figure3(c: &Common, seeds: Option<u64>) -> Result<()> {
    let mut cfg = c.load()?;
    cfg.mode = crate::config::Mode::Framework;
    if let Some(n) = seeds {
        cfg.repeats = n;
    }
    cfg.validate()?;
    let report = runner::run_figure3(&cfg, c.workers)?;
    output::ensure_dir(&c.out)?;
    output::write_json(&c.out.join("figure3.json"), &report)?;
    let mut records = Vec::new();
    for s in &report.strategies {
        for j in 0..s.accuracy.mean.len() {
            records.push([
                s.strategy.to_string(),
                (j + 1).to_string(),
                s.accuracy.mean[j].to_string(),
                s.accuracy.std[j].to_string(),
                s.learned.mean[j].to_string(),
                s.active.mean[j].to_string(),
            ]);
        }
        let finals = &s.final_accuracy;
        println!("{:6} final acc {:.4} (over {} seeds)", s.strategy, finals.iter().sum::<f64>() / finals.len() as f64, finals.len());
    }
    output::write_csv(&c.out.join("figure3.csv"), &["strategy", "experiment", "acc_mean", "acc_std", "learned_mean", "active_mean"], records)?;
    output::write_json(&c.out.join("manifest.json"), &Manifest::new("figure3", &cfg, Vec::new())?)
}

fn train(c: &Common) -> Result<()> {
    let mut cfg = c.load()?;
    cfg.mode = crate::config::Mode::Neural;
    cfg.validate()?;
    let (rows, events) = runner::run_neural(&cfg, c.workers)?;
    let (csv_path, _) = output::emit_results(&c.out, "train", &rows, &cfg)?;
    output::write_jsonl(&c.out.join("trace.jsonl"), &events)?;
    for s in output::summarize(&rows) {
        println!(
            "{:8} final acc {:.4}  mean acc {:.4}  mean total steps {:.1}",
            s.method, s.final_test_acc, s.average_test_acc, s.mean_total_steps
        );
    }
    println!("results -> {}", csv_path.display());
    Ok(())
}
