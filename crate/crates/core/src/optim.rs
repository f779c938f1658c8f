//! First-order optimizers: SGD, Adam, AdamW, AdaGrad, RMSprop, Adadelta and
//! NAdam, with coupled L2 and decoupled (AdamW) weight decay.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptimizerKind {
    SGD,
    Adam,
    AdamW,
    AdaGrad,
    RMSprop,
    Adadelta,
    NAdam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::SGD,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::AdaGrad,
        OptimizerKind::RMSprop,
        OptimizerKind::Adadelta,
        OptimizerKind::NAdam,
    ];

    /// Learning rate used when none is configured. Adadelta ignores it.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::AdaGrad => 0.1,
            OptimizerKind::Adadelta => 1.0,
            _ => 0.01,
        }
    }

    /// Number of per-parameter state buffers.
    pub fn buffers(self) -> usize {
        match self {
            OptimizerKind::SGD => 0,
            OptimizerKind::AdaGrad | OptimizerKind::RMSprop => 1,
            OptimizerKind::Adam | OptimizerKind::AdamW | OptimizerKind::NAdam | OptimizerKind::Adadelta => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Coupled L2 penalty, added to the gradient.
    #[serde(default)]
    pub l2_coefficient: f64,
    /// Decoupled weight decay (AdamW only).
    #[serde(default)]
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// RMSprop smoothing constant / Adadelta rho.
    pub decay: f64,
}

impl OptimizerConfig {
    /// Kind-specific defaults: Adam family β=(0.9, 0.999), ε=1e-8;
    /// AdaGrad ε=1e-10; RMSprop α=0.99; Adadelta ρ=0.9, ε=1e-6.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        let epsilon = match kind {
            OptimizerKind::AdaGrad => 1e-10,
            OptimizerKind::Adadelta => 1e-6,
            _ => 1e-8,
        };
        let decay = match kind {
            OptimizerKind::Adadelta => 0.9,
            _ => 0.99,
        };
        Self { kind, learning_rate, l2_coefficient: 0.0, weight_decay: 0.0, beta1: 0.9, beta2: 0.999, epsilon, decay }
    }

    /// [`new`](Self::new) with the kind's default learning rate.
    pub fn with_defaults(kind: OptimizerKind) -> Self {
        Self::new(kind, kind.default_learning_rate())
    }

    /// Regularization strength, routed per optimizer:
    /// decoupled decay for AdamW, L2 for everything else.
    pub fn with_regularization(mut self, strength: f64) -> Self {
        if self.kind == OptimizerKind::AdamW {
            self.weight_decay = strength;
            self.l2_coefficient = 0.0;
        } else {
            self.l2_coefficient = strength;
            self.weight_decay = 0.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.learning_rate.is_finite() && self.learning_rate > 0.0, "learning rate must be positive");
        ensure!(self.l2_coefficient >= 0.0, "negative L2 coefficient");
        ensure!(self.weight_decay >= 0.0, "negative weight decay");
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        ensure!((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2), "moment decays must lie in [0, 1)");
        ensure!((0.0..1.0).contains(&self.decay), "decay must lie in [0, 1)");
        ensure!(
            !(self.l2_coefficient > 0.0 && self.weight_decay > 0.0),
            "L2 and decoupled weight decay are mutually exclusive"
        );
        ensure!(
            self.weight_decay == 0.0 || self.kind == OptimizerKind::AdamW,
            "decoupled weight decay is only defined for AdamW"
        );
        Ok(())
    }
}

/// Per-parameter buffers plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    buffers: Vec<Vec<Vec<f64>>>,
}

impl OptimizerState {
    /// Zero-initialized state for the given parameter tensors.
    pub fn new(config: OptimizerConfig, params: &[Tensor]) -> Result<Self> {
        config.validate()?;
        let k = config.kind.buffers();
        let buffers = params.iter().map(|p| (0..k).map(|_| vec![0.0; p.len()]).collect()).collect();
        Ok(Self { config, step: 0, buffers })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn buffers(&self, param: usize) -> &[Vec<f64>] {
        &self.buffers[param]
    }

    /// Applies one update to every parameter that carries a gradient.
    /// Parameters without a gradient buffer (frozen) are left alone.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.buffers.len() {
            return Err(Error::Dimension {
                op: "optimizer",
                axis: "parameters",
                expected: self.buffers.len(),
                found: params.len(),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { param: i });
                }
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let cfg = self.config;
        for (p, bufs) in params.iter_mut().zip(self.buffers.iter_mut()) {
            let Some(grad) = p.grad().map(|g| g.to_vec()) else { continue };
            update(&cfg, t, p.data_mut(), &grad, bufs);
        }
        Ok(())
    }
}

fn update(cfg: &OptimizerConfig, t: f64, w: &mut [f64], grad: &[f64], bufs: &mut [Vec<f64>]) {
    let lr = cfg.learning_rate;
    let l2 = cfg.l2_coefficient;
    let eps = cfg.epsilon;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    match cfg.kind {
        OptimizerKind::SGD => {
            for (w, &g) in w.iter_mut().zip(grad) {
                *w -= lr * (g + l2 * *w);
            }
        }
        OptimizerKind::Adam | OptimizerKind::AdamW => {
            let (m, rest) = bufs.split_at_mut(1);
            let (m, v) = (&mut m[0], &mut rest[0]);
            let c1 = 1.0 - libm::pow(b1, t);
            let c2 = 1.0 - libm::pow(b2, t);
            let decay = if cfg.kind == OptimizerKind::AdamW { cfg.weight_decay } else { 0.0 };
            for i in 0..w.len() {
                let g = grad[i] + l2 * w[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                let before = w[i];
                w[i] -= lr * mhat / (libm::sqrt(vhat) + eps);
                w[i] -= lr * decay * before;
            }
        }
        OptimizerKind::NAdam => {
            // Nesterov-corrected first moment with a constant momentum schedule.
            let (m, rest) = bufs.split_at_mut(1);
            let (m, v) = (&mut m[0], &mut rest[0]);
            let c1_next = 1.0 - libm::pow(b1, t + 1.0);
            let c1 = 1.0 - libm::pow(b1, t);
            let c2 = 1.0 - libm::pow(b2, t);
            for i in 0..w.len() {
                let g = grad[i] + l2 * w[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mbar = b1 * m[i] / c1_next + (1.0 - b1) * g / c1;
                let vhat = v[i] / c2;
                w[i] -= lr * mbar / (libm::sqrt(vhat) + eps);
            }
        }
        OptimizerKind::AdaGrad => {
            let acc = &mut bufs[0];
            for i in 0..w.len() {
                let g = grad[i] + l2 * w[i];
                acc[i] += g * g;
                w[i] -= lr * g / (libm::sqrt(acc[i]) + eps);
            }
        }
        OptimizerKind::RMSprop => {
            let sq = &mut bufs[0];
            let a = cfg.decay;
            for i in 0..w.len() {
                let g = grad[i] + l2 * w[i];
                sq[i] = a * sq[i] + (1.0 - a) * g * g;
                w[i] -= lr * g / (libm::sqrt(sq[i]) + eps);
            }
        }
        OptimizerKind::Adadelta => {
            // Learning-rate free: the step is scaled by the running RMS of past updates.
            let (sq, rest) = bufs.split_at_mut(1);
            let (sq, upd) = (&mut sq[0], &mut rest[0]);
            let rho = cfg.decay;
            for i in 0..w.len() {
                let g = grad[i] + l2 * w[i];
                sq[i] = rho * sq[i] + (1.0 - rho) * g * g;
                let delta = libm::sqrt(upd[i] + eps) / libm::sqrt(sq[i] + eps) * g;
                upd[i] = rho * upd[i] + (1.0 - rho) * delta * delta;
                w[i] -= delta;
            }
        }
    }
}
