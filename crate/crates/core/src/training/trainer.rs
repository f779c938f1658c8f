use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::early_stop::{should_stop, EarlyStopConfig};
use super::loss::{relative_rmse, rmse_coordinate};
use crate::baselines::barycenter;
use crate::calo::{Dataset, EventRecord};
use crate::error::{ensure, Error, Result};
use crate::graph::ComputeGraph;
use crate::nn::{AuxMode, Model, ModelSpec, Target};
use crate::optim::OptimizerState;
use crate::rng::{self, tag};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub early_stop: EarlyStopConfig,
    /// When set, this fraction of the training set is held out and drives
    /// early stopping instead of the evaluation set.
    #[serde(default)]
    pub validation_fraction: Option<f64>,
    /// Events per forward pass during evaluation.
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
    /// Keep the final weights in the returned instance.
    #[serde(default)]
    pub keep_weights: bool,
}

fn default_eval_batch() -> usize {
    256
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { early_stop: EarlyStopConfig::default(), validation_fraction: None, eval_batch: 256, keep_weights: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.early_stop.validate()?;
        ensure!(self.eval_batch >= 1, "eval_batch must be positive");
        if let Some(f) = self.validation_fraction {
            ensure!(f > 0.0 && f < 1.0, "validation fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedInstance {
    pub model_spec_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Tensor>>,
    pub init_seed: u64,
    /// Seed of the training-sample draw, when the sample was drawn.
    pub data_seed: Option<u64>,
    /// Evaluation loss after each epoch.
    pub loss_trace: Vec<f64>,
    pub stop_epoch: usize,
    /// `+inf` for diverged runs.
    pub final_test_loss: f64,
    pub diverged: bool,
    /// Not serialized so that stored reports stay reproducible.
    #[serde(skip)]
    pub wall_time: Option<f64>,
}

/// Network inputs and targets for a slice of events.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub aux: Option<Tensor>,
    pub targets: Vec<f64>,
}

fn aux_features(mode: AuxMode, r: &EventRecord, out: &mut Vec<f64>) {
    match mode {
        AuxMode::None => {}
        AuxMode::EnergySum => out.push(r.deposited()),
        AuxMode::Barycenter => {
            let (x, y) = barycenter(&r.cluster).unwrap_or((0.0, 0.0));
            out.push(x);
            out.push(y);
        }
    }
}

impl Batch {
    pub fn from_records<'a, I>(records: I, spec: &ModelSpec) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EventRecord>,
    {
        let n = spec.input_size;
        ensure!(n * n == crate::calo::CELLS, "model input {n}x{n} does not match the cluster grid");
        let mut pixels = Vec::new();
        let mut aux = Vec::new();
        let mut targets = Vec::new();
        for r in records {
            pixels.extend_from_slice(&r.cluster);
            aux_features(spec.aux_mode, r, &mut aux);
            targets.push(match spec.target {
                Target::Energy => r.energy,
                Target::PositionX => r.x,
            });
        }
        let b = targets.len();
        ensure!(b >= 1, "empty batch");
        let a = spec.aux_mode.len();
        Ok(Self {
            inputs: Tensor::new(alloc::vec![b, 1, n, n], pixels)?,
            aux: if a > 0 { Some(Tensor::new(alloc::vec![b, a], aux)?) } else { None },
            targets,
        })
    }
}

fn metric(target: Target, pred: &[f64], truth: &[f64]) -> Result<f64> {
    match target {
        Target::Energy => relative_rmse(pred, truth),
        Target::PositionX => rmse_coordinate(pred, truth),
    }
}

/// Loss of `model` over the whole dataset.
pub fn evaluate(model: &Model, data: &Dataset, chunk: usize) -> Result<f64> {
    ensure!(!data.is_empty(), "evaluation on an empty set");
    let spec = model.spec();
    let mut pred = Vec::with_capacity(data.len());
    let mut truth = Vec::with_capacity(data.len());
    for part in data.records.chunks(chunk.max(1)) {
        let b = Batch::from_records(part, spec)?;
        pred.extend(model.predict(&b.inputs, b.aux.as_ref())?);
        truth.extend(b.targets);
    }
    if pred.iter().any(|p| !p.is_finite()) {
        return Ok(f64::INFINITY);
    }
    metric(spec.target, &pred, &truth)
}

/// He-initializes `spec` from `init_seed` and trains it.
pub fn train_instance(
    spec: &ModelSpec,
    train_set: &Dataset,
    eval_set: &Dataset,
    init_seed: u64,
    cfg: &TrainConfig,
) -> Result<TrainedInstance> {
    train_model(Model::new(spec.clone(), init_seed)?, train_set, eval_set, init_seed, cfg)
}

enum Step {
    Ok,
    Diverged,
}

fn train_batch(model: &mut Model, opt: &mut OptimizerState, batch: &Batch) -> Result<Step> {
    let mut g = ComputeGraph::new();
    let x = g.input(batch.inputs.clone());
    let a = batch.aux.clone().map(|t| g.input(t));
    let out = model.forward(&mut g, x, a)?;
    let loss = match model.spec().target {
        Target::Energy => g.relative_rmse(out, &batch.targets)?,
        Target::PositionX => g.rmse(out, &batch.targets)?,
    };
    if !g.value(loss).data()[0].is_finite() {
        return Ok(Step::Diverged);
    }
    let grads = g.backward(loss)?;
    model.load_grads(&g, &grads);
    match opt.step(model.params_mut()) {
        Ok(()) => Ok(Step::Ok),
        Err(Error::Divergence { .. }) => Ok(Step::Diverged),
        Err(e) => Err(e),
    }
}

/// Trains an already built model. Mini-batches are reshuffled every epoch
/// from a stream derived from `init_seed`; a batch covering the whole set
/// is used in stored order.
pub fn train_model(
    mut model: Model,
    train_set: &Dataset,
    eval_set: &Dataset,
    init_seed: u64,
    cfg: &TrainConfig,
) -> Result<TrainedInstance> {
    cfg.validate()?;
    ensure!(!train_set.is_empty(), "empty training set");
    ensure!(!eval_set.is_empty(), "empty evaluation set");
    let spec = model.spec().clone();
    let held_out;
    let (fit_set, stop_set) = match cfg.validation_fraction {
        Some(f) => {
            let (val, fit) = train_set.split_fixed(f, rng::derive_seed(init_seed, tag::SPLIT, 0))?;
            ensure!(!val.is_empty() && !fit.is_empty(), "validation split leaves an empty part");
            held_out = (fit, val);
            (&held_out.0, &held_out.1)
        }
        None => (train_set, eval_set),
    };

    let mut opt = OptimizerState::new(spec.optimizer, model.params())?;
    let mut shuffle = rng::substream(init_seed, tag::SHUFFLE);
    let mut order: Vec<usize> = (0..fit_set.len()).collect();
    let bs = spec.batch_size;
    let mut trace = Vec::new();
    let mut diverged = false;

    if model.has_trainable() {
        loop {
            if bs < order.len() {
                order.shuffle(&mut shuffle);
            }
            for chunk in order.chunks(bs) {
                let batch = Batch::from_records(chunk.iter().map(|&i| &fit_set.records[i]), &spec)?;
                if let Step::Diverged = train_batch(&mut model, &mut opt, &batch)? {
                    diverged = true;
                    break;
                }
            }
            if diverged {
                trace.push(f64::INFINITY);
                break;
            }
            let loss = evaluate(&model, stop_set, cfg.eval_batch)?;
            trace.push(loss);
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            if should_stop(&trace, &cfg.early_stop) {
                break;
            }
        }
    } else {
        trace.push(evaluate(&model, stop_set, cfg.eval_batch)?);
    }
    model.zero_grads();

    let final_test_loss = if diverged {
        f64::INFINITY
    } else if cfg.validation_fraction.is_some() {
        evaluate(&model, eval_set, cfg.eval_batch)?
    } else {
        *trace.last().expect("at least one epoch")
    };
    Ok(TrainedInstance {
        model_spec_id: spec.name.clone(),
        weights: cfg.keep_weights.then(|| model.params().to_vec()),
        init_seed,
        data_seed: None,
        stop_epoch: trace.len(),
        loss_trace: trace,
        final_test_loss,
        diverged,
        wall_time: None,
    })
}
