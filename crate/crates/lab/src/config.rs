//! Run configuration, read from a TOML file.
//!
//! Every section is optional. A missing file is a config error; unknown keys
//! are rejected so that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use plasticity_core::expanding::{DataMode, Method, ProtocolConfig, SyntheticFeatureNoiseSpec};
use plasticity_core::nn::{SgdConfig, TrainControl};
use plasticity_core::reinit::{DashConfig, SpConfig};
use plasticity_core::strategies::StrategyKind;
use plasticity_core::theorems::Figure3Config;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "PLASTICITY_LAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Framework,
    #[default]
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Cold,
    Warm,
    WarmRem,
    Sp,
    Dash,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Cold => "cold",
            MethodName::Warm => "warm",
            MethodName::WarmRem => "warm_rem",
            MethodName::Sp => "sp",
            MethodName::Dash => "dash",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: vec![128] }
    }
}

/// Parameters of the synthetic feature-noise generator; the chunk count comes
/// from the top-level `chunk_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub classes: usize,
    pub features_per_class: usize,
    pub feature_strength: f64,
    pub noise_dim: usize,
    pub noise_strength: f64,
    pub points_per_chunk: usize,
    pub test_points: usize,
    /// Defaults to `0.6·(1 − k/K) + 0.02` for feature `k`.
    pub feature_probs: Option<Vec<f64>>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            classes: 4,
            features_per_class: 10,
            feature_strength: 1.0,
            noise_dim: 400,
            noise_strength: 3.0,
            points_per_chunk: 50,
            test_points: 2000,
            feature_probs: None,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self, chunks: usize) -> SyntheticFeatureNoiseSpec {
        let k = self.features_per_class;
        let feature_probs = self
            .feature_probs
            .clone()
            .unwrap_or_else(|| (0..k).map(|i| 0.6 * (1.0 - i as f64 / k as f64) + 0.02).collect());
        SyntheticFeatureNoiseSpec {
            classes: self.classes,
            features_per_class: k,
            feature_strength: self.feature_strength,
            noise_dim: self.noise_dim,
            noise_strength: self.noise_strength,
            points_per_chunk: self.points_per_chunk,
            chunks,
            test_points: self.test_points,
            feature_probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSection {
    Synthetic(SyntheticSection),
    /// Files with a header row and `label,x0,x1,…` records. The training file
    /// is cut into `chunk_count` contiguous chunks.
    Csv { train: PathBuf, test: PathBuf },
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection::Synthetic(SyntheticSection::default())
    }
}

/// The discrete model. With `instance` set, the fixed-count instance in that
/// file (as written by `gen-instance`) replaces the Bernoulli population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkSection {
    pub classes: u16,
    pub features: u16,
    pub tau: u32,
    pub gamma: u64,
    pub chunk_size: usize,
    pub experiments: usize,
    pub prob_low: f64,
    pub prob_high: f64,
    pub test_points: usize,
    pub strategies: Vec<StrategyKind>,
    pub instance: Option<PathBuf>,
}

impl Default for FrameworkSection {
    fn default() -> Self {
        let f = Figure3Config::default();
        Self {
            classes: f.num_classes,
            features: f.features_per_class,
            tau: f.tau,
            gamma: f.gamma,
            chunk_size: f.chunk_size,
            experiments: f.experiments,
            prob_low: f.prob_low,
            prob_high: f.prob_high,
            test_points: f.test_size,
            strategies: StrategyKind::ALL.to_vec(),
            instance: None,
        }
    }
}

impl FrameworkSection {
    pub fn figure3(&self) -> Figure3Config {
        Figure3Config {
            num_classes: self.classes,
            features_per_class: self.features,
            prob_low: self.prob_low,
            prob_high: self.prob_high,
            chunk_size: self.chunk_size,
            experiments: self.experiments,
            gamma: self.gamma,
            tau: self.tau,
            test_size: self.test_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Seeds `seed, seed + 1, …` are run this many times.
    pub repeats: u64,
    pub chunk_count: usize,
    pub method: Option<MethodName>,
    /// Several methods at once; takes precedence over `method`.
    pub methods: Option<Vec<MethodName>>,
    pub data_mode: DataMode,
    pub network: NetworkSection,
    pub optimizer: SgdConfig,
    pub train: TrainControl,
    pub dash: DashConfig,
    pub sp: SpConfig,
    pub dataset: DatasetSection,
    pub framework: FrameworkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            seed: 0,
            repeats: 1,
            chunk_count: 50,
            method: None,
            methods: None,
            data_mode: DataMode::default(),
            network: NetworkSection::default(),
            optimizer: SgdConfig::default(),
            train: TrainControl::default(),
            dash: DashConfig::default(),
            sp: SpConfig::default(),
            dataset: DatasetSection::default(),
            framework: FrameworkSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads and validates `path`. Relative dataset and instance paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(LabError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| LabError::Toml { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSection::Csv { train, test } = &mut self.dataset {
            fix(train);
            fix(test);
        }
        if let Some(p) = &mut self.framework.instance {
            fix(p);
        }
    }

    /// `flag`, then the environment variable, then the file.
    pub fn apply_seed_override(&mut self, flag: Option<u64>) -> Result<()> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| LabError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_count == 0 {
            return Err(LabError::Config("chunk_count must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(LabError::Config("repeats must be at least 1".into()));
        }
        if self.methods.as_ref().is_some_and(|m| m.is_empty()) {
            return Err(LabError::Config("methods must not be empty".into()));
        }
        if let DatasetSection::Csv { train, test } = &self.dataset {
            for p in [train, test] {
                if !p.is_file() {
                    return Err(LabError::MissingFile(p.clone()));
                }
            }
        }
        if let Some(p) = &self.framework.instance {
            if !p.is_file() {
                return Err(LabError::MissingFile(p.clone()));
            }
        }
        if self.framework.strategies.is_empty() {
            return Err(LabError::Config("framework.strategies must not be empty".into()));
        }
        for m in self.method_list() {
            self.protocol(m, self.seed)?.validate()?;
        }
        Ok(())
    }

    pub fn method_list(&self) -> Vec<MethodName> {
        match (&self.methods, self.method) {
            (Some(ms), _) => ms.clone(),
            (None, Some(m)) => vec![m],
            (None, None) => vec![MethodName::Warm],
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn method(&self, name: MethodName) -> Method {
        match name {
            MethodName::Cold => Method::Cold,
            MethodName::Warm => Method::Warm,
            MethodName::WarmRem => Method::WarmRem,
            MethodName::Sp => Method::ShrinkPerturb(self.sp),
            MethodName::Dash => Method::Dash(self.dash),
        }
    }

    pub fn protocol(&self, name: MethodName, seed: u64) -> Result<ProtocolConfig> {
        Ok(ProtocolConfig {
            hidden: self.network.hidden.clone(),
            sgd: self.optimizer,
            control: self.train,
            method: self.method(name),
            data_mode: self.data_mode,
            seed,
        })
    }
}
