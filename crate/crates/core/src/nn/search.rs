use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::calo::GRID;
use crate::error::{ensure, Result};
use crate::nn::activation::Activation;
use crate::nn::spec::{AuxMode, ConvLayer, ModelSpec, PoolLayer, Target};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::robustness::RandomizationMode;

/// Architecture-only part of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub conv_layers: Vec<ConvLayer>,
    pub pool_layers: Vec<PoolLayer>,
    pub fc_layers: Vec<usize>,
    #[serde(default)]
    pub aux_mode: AuxMode,
    #[serde(default)]
    pub aux_injection_layer: Option<usize>,
}

/// Axes of a grid search. Enumeration is lexicographic in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub architectures: Vec<Architecture>,
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// L2 coefficient, or decoupled weight decay for AdamW.
    pub regularizations: Vec<f64>,
    #[serde(default)]
    pub target: Target,
}

fn dedup<T: PartialEq + Clone>(xs: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(xs.len());
    for x in xs {
        if !out.contains(x) {
            out.push(x.clone());
        }
    }
    out
}

impl SearchSpace {
    /// Cartesian product of the axes, duplicates removed, in
    /// (architecture, activation, optimizer, lr, batch, reg) order.
    pub fn enumerate(&self) -> Result<Vec<ModelSpec>> {
        ensure!(!self.architectures.is_empty(), "search space has no architectures");
        ensure!(!self.activations.is_empty(), "search space has no activations");
        ensure!(!self.optimizers.is_empty(), "search space has no optimizers");
        ensure!(!self.learning_rates.is_empty(), "search space has no learning rates");
        ensure!(!self.batch_sizes.is_empty(), "search space has no batch sizes");
        ensure!(!self.regularizations.is_empty(), "search space has no regularization values");
        let archs = dedup(&self.architectures);
        let acts = dedup(&self.activations);
        let opts = dedup(&self.optimizers);
        let lrs = dedup(&self.learning_rates);
        let bss = dedup(&self.batch_sizes);
        let regs = dedup(&self.regularizations);
        let mut out = Vec::with_capacity(archs.len() * acts.len() * opts.len() * lrs.len() * bss.len() * regs.len());
        for arch in &archs {
            for &act in &acts {
                for &opt in &opts {
                    for &lr in &lrs {
                        for &bs in &bss {
                            for &reg in &regs {
                                out.push(ModelSpec {
                                    name: format!("{}-{:?}-{:?}-lr{}-bs{}-reg{}", arch.name, act, opt, lr, bs, reg),
                                    input_size: GRID,
                                    conv_layers: arch.conv_layers.clone(),
                                    pool_layers: arch.pool_layers.clone(),
                                    fc_layers: arch.fc_layers.clone(),
                                    activation: act,
                                    aux_mode: arch.aux_mode,
                                    aux_injection_layer: arch.aux_injection_layer,
                                    target: self.target,
                                    optimizer: OptimizerConfig::new(opt, lr).with_regularization(reg),
                                    batch_size: bs,
                                    seed_policy: RandomizationMode::BothRandom,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// The energy-reconstruction search grid: two convolutions (32 and 64
/// filters) with 2x2, 3x3 or 5x5 kernels, two to four FC layers, with and
/// without the energy-sum feature, ReLU or PReLU, NAdam or AdamW, and the
/// optimizer-study hyperparameter grid. 6,912 specs in total.
pub fn reference_search_space() -> SearchSpace {
    let mut architectures = Vec::new();
    for aux in [AuxMode::None, AuxMode::EnergySum] {
        for fc_layers in [vec![9, 1], vec![64, 9, 1], vec![128, 64, 9, 1]] {
            for kernel in [2usize, 3, 5] {
                let after_first = (GRID - kernel + 1 - 2) / 2 + 1;
                let after_second = after_first - kernel + 1;
                architectures.push(Architecture {
                    name: format!("k{kernel}-fc{}-{}", fc_layers.len(), if aux.is_none() { "raw" } else { "esum" }),
                    conv_layers: vec![ConvLayer { filters: 32, kernel }, ConvLayer { filters: 64, kernel }],
                    pool_layers: vec![
                        PoolLayer { window: 2, stride: 2 },
                        PoolLayer { window: after_second, stride: after_second },
                    ],
                    fc_layers: fc_layers.clone(),
                    aux_mode: aux,
                    aux_injection_layer: if aux.is_none() { None } else { Some(0) },
                });
            }
        }
    }
    SearchSpace {
        architectures,
        activations: vec![Activation::ReLU, Activation::PReLU],
        optimizers: vec![OptimizerKind::NAdam, OptimizerKind::AdamW],
        learning_rates: vec![1e-4, 1e-3, 1e-2, 1e-1],
        batch_sizes: vec![8, 16, 32, 64, 128, 256],
        regularizations: vec![1e-4, 1e-3, 1e-2, 1e-1],
        target: Target::Energy,
    }
}
