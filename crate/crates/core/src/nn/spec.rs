use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::calo::GRID;
use crate::error::{ensure, Error, Result};
use crate::nn::activation::Activation;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::robustness::RandomizationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolLayer {
    pub window: usize,
    pub stride: usize,
}

/// High-level features fed into a hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    #[default]
    None,
    /// Total deposited energy (1 feature).
    EnergySum,
    /// Energy-weighted centroid `(x, y)` (2 features).
    Barycenter,
}

impl AuxMode {
    /// Number of auxiliary features.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            AuxMode::None => 0,
            AuxMode::EnergySum => 1,
            AuxMode::Barycenter => 2,
        }
    }

    pub fn is_none(self) -> bool {
        self == AuxMode::None
    }
}

/// Regression target and, with it, the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Energy, scored by relative RMSE.
    #[default]
    Energy,
    /// Impact x coordinate, scored by RMSE.
    PositionX,
}

/// Architecture plus training hyperparameters: the unit that model
/// selection ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    pub conv_layers: Vec<ConvLayer>,
    /// One pooling stage per convolution.
    pub pool_layers: Vec<PoolLayer>,
    /// Widths of the fully connected layers; the last one is the output.
    pub fc_layers: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub aux_mode: AuxMode,
    /// Index of the FC layer whose input is extended by the aux features.
    #[serde(default)]
    pub aux_injection_layer: Option<usize>,
    #[serde(default)]
    pub target: Target,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    #[serde(default)]
    pub seed_policy: RandomizationMode,
}

fn default_input_size() -> usize {
    GRID
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.input_size >= 1, "input size must be positive");
        ensure!(!self.conv_layers.is_empty(), "at least one convolution is required");
        ensure!(
            self.pool_layers.len() == self.conv_layers.len(),
            "{} pooling stages for {} convolutions",
            self.pool_layers.len(),
            self.conv_layers.len()
        );
        ensure!(!self.fc_layers.is_empty(), "at least one fully connected layer is required");
        ensure!(self.fc_layers.iter().all(|&w| w > 0), "fully connected widths must be positive");
        ensure!(*self.fc_layers.last().unwrap() == 1, "the output layer must have width 1");
        ensure!(self.batch_size >= 1, "batch size must be positive");
        match (self.aux_mode, self.aux_injection_layer) {
            (AuxMode::None, None) => {}
            (AuxMode::None, Some(_)) => {
                return Err(Error::Contract("aux injection layer set without aux features".into()))
            }
            (_, None) => return Err(Error::Contract("aux features need an injection layer".into())),
            (_, Some(l)) => ensure!(l < self.fc_layers.len(), "aux injection layer {l} out of range"),
        }
        self.optimizer.validate()?;
        self.flattened_features().map(|_| ())
    }

    /// Spatial size after each conv/pool stage; errors name the stage that
    /// does not fit.
    pub fn flattened_features(&self) -> Result<usize> {
        let mut size = self.input_size;
        for (i, (c, p)) in self.conv_layers.iter().zip(&self.pool_layers).enumerate() {
            ensure!(c.filters > 0 && c.kernel > 0, "conv layer {i} has zero size");
            if c.kernel > size {
                return Err(Error::Dimension { op: "conv2d", axis: "kernel height", expected: size, found: c.kernel });
            }
            size = size - c.kernel + 1;
            if p.window == 0 || p.window > size || p.stride == 0 {
                return Err(Error::Dimension { op: "maxpool2d", axis: "height", expected: p.window, found: size });
            }
            size = (size - p.window) / p.stride + 1;
        }
        Ok(self.conv_layers.last().map_or(1, |c| c.filters) * size * size)
    }

    /// Input width of FC layer `layer`, including injected aux features.
    pub fn fc_input(&self, layer: usize) -> Result<usize> {
        let base = if layer == 0 { self.flattened_features()? } else { self.fc_layers[layer - 1] };
        Ok(base + if self.aux_injection_layer == Some(layer) { self.aux_mode.len() } else { 0 })
    }

    /// Trainable parameter count derived from the fields alone.
    pub fn param_count(&self) -> Result<usize> {
        let prelu = self.activation.is_parametric();
        let mut total = 0;
        let mut channels = 1;
        for c in &self.conv_layers {
            total += c.filters * channels * c.kernel * c.kernel;
            if prelu {
                total += c.filters;
            }
            channels = c.filters;
        }
        let last = self.fc_layers.len() - 1;
        for (j, &width) in self.fc_layers.iter().enumerate() {
            total += (self.fc_input(j)? + 1) * width;
            if prelu && j < last {
                total += width;
            }
        }
        Ok(total)
    }

    /// Same spec with the convolution filter counts replaced.
    pub fn with_filters(mut self, filters: &[usize]) -> Result<Self> {
        ensure!(filters.len() == self.conv_layers.len(), "expected {} filter counts", self.conv_layers.len());
        for (c, &f) in self.conv_layers.iter_mut().zip(filters) {
            c.filters = f;
        }
        self.name = format!("{}-f{}", self.name, join(filters));
        Ok(self)
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

/// The four reference architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    Model1,
    Model2,
    Model3,
    Model4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Model1, Preset::Model2, Preset::Model3, Preset::Model4];

    /// Expected trainable parameter total of each preset.
    pub fn reference_param_count(self) -> usize {
        match self {
            Preset::Model1 => 23_923,
            Preset::Model2 => 23_932,
            Preset::Model3 => 23_644,
            Preset::Model4 => 23_662,
        }
    }

    pub fn spec(self) -> ModelSpec {
        let conv_layers = vec![ConvLayer { filters: 32, kernel: 3 }, ConvLayer { filters: 64, kernel: 3 }];
        match self {
            Preset::Model1 | Preset::Model2 => {
                let aux = self == Preset::Model2;
                let optimizer = if aux {
                    OptimizerConfig::new(OptimizerKind::AdamW, 1e-3).with_regularization(0.1)
                } else {
                    OptimizerConfig::new(OptimizerKind::NAdam, 1e-4).with_regularization(0.01)
                };
                ModelSpec {
                    name: if aux { "model2".into() } else { "model1".into() },
                    input_size: GRID,
                    conv_layers,
                    pool_layers: vec![PoolLayer { window: 2, stride: 2 }, PoolLayer { window: 2, stride: 1 }],
                    fc_layers: vec![9, 1],
                    activation: Activation::ReLU,
                    aux_mode: if aux { AuxMode::EnergySum } else { AuxMode::None },
                    aux_injection_layer: if aux { Some(0) } else { None },
                    target: Target::Energy,
                    optimizer,
                    batch_size: if aux { 32 } else { 64 },
                    seed_policy: RandomizationMode::BothRandom,
                }
            }
            Preset::Model3 | Preset::Model4 => {
                let aux = self == Preset::Model4;
                ModelSpec {
                    name: if aux { "model4".into() } else { "model3".into() },
                    input_size: GRID,
                    conv_layers,
                    pool_layers: vec![PoolLayer { window: 2, stride: 2 }, PoolLayer { window: 4, stride: 4 }],
                    fc_layers: vec![64, 9, 1],
                    activation: Activation::PReLU,
                    aux_mode: if aux { AuxMode::Barycenter } else { AuxMode::None },
                    aux_injection_layer: if aux { Some(1) } else { None },
                    target: Target::PositionX,
                    optimizer: OptimizerConfig::new(OptimizerKind::AdamW, 1e-4).with_regularization(0.1),
                    batch_size: 32,
                    seed_policy: RandomizationMode::BothRandom,
                }
            }
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "model1" | "1" => Ok(Preset::Model1),
            "model2" | "2" => Ok(Preset::Model2),
            "model3" | "3" => Ok(Preset::Model3),
            "model4" | "4" => Ok(Preset::Model4),
            _ => Err(Error::Catalogue(format!("no preset named {s:?}"))),
        }
    }
}

/// Looks up a preset by name.
pub fn build_preset(id: &str) -> Result<ModelSpec> {
    Ok(id.parse::<Preset>()?.spec())
}
