//! Robustness of a model spec over instance ensembles, model selection by
//! successive pruning, and the experiment drivers built on them.

pub mod experiments;
pub mod selection;
pub mod stats;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use experiments::{
    criterion_study, instance_seeds, run_instances, run_instances_with, sample_size_sweep, CriterionCurve,
    InstancePlan, SweepPlan, SweepRow,
};
pub use selection::{
    instance_seed, select_models, Exclusion, InstanceTrainer, Policy, PruningPolicy, Removal, RoundRecord, SelectionConfig,
    SelectionLedger, SelectionOutcome,
};
pub use stats::{boxplot, ecdf, robustness_statistic, summarize, BoxplotStats, SelectionCriterion, Summary};

/// Which randomness source varies between the instances of a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizationMode {
    /// One training sample, a fresh weight initialization per instance.
    FixedDataRandomInit,
    /// One initialization seed, a fresh training sample per instance.
    RandomDataFixedInit,
    #[default]
    BothRandom,
}

impl RandomizationMode {
    pub const ALL: [RandomizationMode; 3] =
        [RandomizationMode::FixedDataRandomInit, RandomizationMode::RandomDataFixedInit, RandomizationMode::BothRandom];
}

/// Seeds and outcome flags of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceProvenance {
    pub init_seed: u64,
    pub data_seed: Option<u64>,
    pub stop_epoch: usize,
    pub diverged: bool,
}

/// Final test losses of the instances of one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    model_spec_id: String,
    losses: Vec<f64>,
    instances: Vec<InstanceProvenance>,
}

impl RobustnessRecord {
    pub fn new(model_spec_id: impl Into<String>) -> Self {
        Self { model_spec_id: model_spec_id.into(), losses: Vec::new(), instances: Vec::new() }
    }

    pub fn push(&mut self, loss: f64, provenance: InstanceProvenance) {
        self.losses.push(loss);
        self.instances.push(provenance);
    }

    pub fn model_spec_id(&self) -> &str {
        &self.model_spec_id
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn instances(&self) -> &[InstanceProvenance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn statistics(&self) -> Result<Summary> {
        summarize(&self.losses)
    }

    pub fn statistic(&self, criterion: SelectionCriterion) -> Result<f64> {
        robustness_statistic(&self.losses, criterion)
    }
}
