//! TOML experiment configs. One file drives one command; the effective
//! config (after command-line overrides) is stored next to the outputs so a
//! run can be repeated from it.

use std::path::{Path, PathBuf};

use rlab_core::calo::{DatasetKind, GeneratorConfig};
use rlab_core::nn::{build_preset, ModelSpec, SearchSpace};
use rlab_core::optim::{OptimizerConfig, OptimizerKind};
use rlab_core::robustness::{Policy, RandomizationMode, SelectionCriterion};
use rlab_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream the command uses.
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportBlock>,
}

fn yes() -> bool {
    true
}

/// Generator settings; anything left out keeps the library default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBlock {
    pub kind: DatasetKind,
    pub events: usize,
    /// Seed of the event stream; defaults to the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_term: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_term: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halo_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_fraction: Option<f64>,
    /// Also write the CSV export (gen-data only).
    #[serde(default)]
    pub csv: bool,
}

impl GeneratorBlock {
    pub fn new(kind: DatasetKind, events: usize) -> Self {
        Self {
            kind,
            events,
            seed: None,
            noise: true,
            containment: None,
            stochastic_term: None,
            constant_term: None,
            core_radius: None,
            halo_radius: None,
            core_fraction: None,
            csv: false,
        }
    }

    pub fn config(&self) -> Result<GeneratorConfig> {
        let mut c = GeneratorConfig::new(self.kind);
        if !self.noise {
            c = c.without_noise();
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.containment, self.containment);
        set(&mut c.stochastic_term, self.stochastic_term);
        set(&mut c.constant_term, self.constant_term);
        set(&mut c.core_radius, self.core_radius);
        set(&mut c.halo_radius, self.halo_radius);
        set(&mut c.core_fraction, self.core_fraction);
        c.validate().map_err(|e| Error::Config(format!("generator: {e}")))?;
        if self.events == 0 {
            return Err(Error::Config("generator.events must be at least 1".into()));
        }
        Ok(c)
    }
}

fn half() -> f64 {
    0.5
}

/// Where the events come from and how they are split into train and test
/// pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Generate in memory instead of reading a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorBlock>,
    #[serde(default = "half")]
    pub test_fraction: f64,
}

/// A preset or a full spec, plus optional overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// `model1` .. `model4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    /// Replacement convolution filter counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// L2 coefficient, or decoupled weight decay for AdamW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<f64>,
}

impl ModelBlock {
    pub fn preset(id: &str) -> Self {
        Self { preset: Some(id.into()), ..Self::default() }
    }

    pub fn resolve(&self) -> Result<ModelSpec> {
        let mut spec = match (&self.preset, &self.spec) {
            (Some(id), None) => build_preset(id).map_err(|e| Error::Config(e.to_string()))?,
            (None, Some(s)) => s.clone(),
            _ => return Err(Error::Config("model needs exactly one of `preset` or `spec`".into())),
        };
        if let Some(f) = &self.filters {
            spec = spec.with_filters(f).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(b) = self.batch_size {
            spec.batch_size = b;
        }
        if self.optimizer.is_some() || self.learning_rate.is_some() || self.regularization.is_some() {
            let kind = self.optimizer.unwrap_or(spec.optimizer.kind);
            let lr = self.learning_rate.unwrap_or(if self.optimizer.is_some() {
                kind.default_learning_rate()
            } else {
                spec.optimizer.learning_rate
            });
            let reg = self.regularization.unwrap_or(spec.optimizer.l2_coefficient.max(spec.optimizer.weight_decay));
            spec.optimizer = OptimizerConfig::new(kind, lr).with_regularization(reg);
        }
        spec.validate().map_err(|e| Error::Config(format!("model {}: {e}", spec.name)))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessBlock {
    pub k: usize,
    #[serde(default)]
    pub mode: RandomizationMode,
    /// Bootstrap sample size per instance.
    pub train_size: usize,
    /// Fixed subset of the test pool; the whole pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Indices into the 45-step sample-size schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    /// Explicit training sizes, used instead of `indices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    pub k: usize,
    /// Test events per instance; matches the training size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
}

fn mean_criterion() -> SelectionCriterion {
    SelectionCriterion::Mean
}

fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionBlock {
    /// Instances per model of the exhaustive campaign used for the budget
    /// comparison.
    pub k: usize,
    #[serde(default = "mean_criterion")]
    pub criterion: SelectionCriterion,
    #[serde(default = "hundred")]
    pub max_rounds: usize,
    pub policy: Policy,
    pub trainer: TrainerBlock,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<SearchSpace>,
}

/// How one instance of a candidate gets its loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainerBlock {
    /// Candidate `i` returns `means[i]` plus Gaussian noise of width `sigma`.
    Mock { means: Vec<f64>, sigma: f64 },
    /// Real training on a bootstrap sample of the train pool.
    Train { train_size: usize },
    /// Runs `command`; the last line of its standard output is the loss.
    External { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    /// `records.json` files, or directories containing one.
    pub inputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<SelectionCriterion>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and makes every relative path in it relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::fs::canonicalize(&base).unwrap_or(base);
        cfg.anchor(&base);
        Ok(cfg)
    }

    fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = self.out.as_mut() {
            fix(o);
        }
        if let Some(p) = self.data.as_mut().and_then(|d| d.path.as_mut()) {
            fix(p);
        }
        if let Some(r) = self.report.as_mut() {
            r.inputs.iter_mut().for_each(fix);
        }
    }

    pub fn require<'a, T>(&self, block: &'a Option<T>, name: &str) -> Result<&'a T> {
        block.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] block")))
    }
}
