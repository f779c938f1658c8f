use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::stats::{boxplot, ecdf, BoxplotStats, SelectionCriterion};
use super::{InstanceProvenance, RandomizationMode, RobustnessRecord};
use crate::calo::Dataset;
use crate::error::{ensure, Result};
use crate::exec::Executor;
use crate::nn::{Model, ModelSpec};
use crate::rng::{derive_seed, tag};
use crate::training::{train_model, TrainConfig, TrainedInstance};

/// How many instances to train and where their randomness comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstancePlan {
    pub k: usize,
    #[serde(default)]
    pub mode: RandomizationMode,
    pub base_seed: u64,
    /// Size of each bootstrap training sample drawn from the pool.
    pub train_size: usize,
}

/// `(data_seed, init_seed)` of each instance. The fixed source reuses
/// index 0 of its stream.
pub fn instance_seeds(mode: RandomizationMode, base_seed: u64, k: usize) -> Vec<(u64, u64)> {
    (0..k as u64)
        .map(|i| {
            let (d, n) = match mode {
                RandomizationMode::FixedDataRandomInit => (0, i),
                RandomizationMode::RandomDataFixedInit => (i, 0),
                RandomizationMode::BothRandom => (i, i),
            };
            (derive_seed(base_seed, tag::DATA, d), derive_seed(base_seed, tag::INIT, n))
        })
        .collect()
}

/// Trains `plan.k` He-initialized instances of `spec`.
pub fn run_instances<E: Executor>(
    spec: &ModelSpec,
    plan: &InstancePlan,
    pool: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    exec: &E,
) -> Result<(RobustnessRecord, Vec<TrainedInstance>)> {
    spec.validate()?;
    run_instances_with(&spec.name, plan, pool, test_set, cfg, exec, |init| Model::new(spec.clone(), init))
}

/// Like [`run_instances`] with a caller-supplied model constructor taking
/// the init seed.
pub fn run_instances_with<E, B>(
    name: &str,
    plan: &InstancePlan,
    pool: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    exec: &E,
    build: B,
) -> Result<(RobustnessRecord, Vec<TrainedInstance>)>
where
    E: Executor,
    B: Fn(u64) -> Result<Model> + Sync,
{
    ensure!(plan.k >= 1, "k must be at least 1");
    ensure!(plan.train_size >= 1, "train_size must be positive");
    let seeds = instance_seeds(plan.mode, plan.base_seed, plan.k);
    let runs = exec.map(seeds.len(), |i| -> Result<TrainedInstance> {
        let (data_seed, init_seed) = seeds[i];
        let train = pool.bootstrap_sample(plan.train_size, data_seed)?;
        let mut inst = train_model(build(init_seed)?, &train, test_set, init_seed, cfg)?;
        inst.data_seed = Some(data_seed);
        Ok(inst)
    });
    let mut record = RobustnessRecord::new(String::from(name));
    let mut instances = Vec::with_capacity(runs.len());
    for r in runs {
        let inst = r?;
        record.push(
            inst.final_test_loss,
            InstanceProvenance {
                init_seed: inst.init_seed,
                data_seed: inst.data_seed,
                stop_epoch: inst.stop_epoch,
                diverged: inst.diverged,
            },
        );
        instances.push(inst);
    }
    Ok((record, instances))
}

/// Per-model statistic values under one criterion and their empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCurve {
    pub criterion: SelectionCriterion,
    /// One value per record, in record order.
    pub values: Vec<f64>,
    /// `(value, fraction of models at or below value)`.
    pub ecdf: Vec<(f64, f64)>,
}

pub fn criterion_study(records: &[RobustnessRecord], criteria: &[SelectionCriterion]) -> Result<Vec<CriterionCurve>> {
    ensure!(!records.is_empty(), "criterion study without records");
    criteria
        .iter()
        .map(|&criterion| {
            let values = records.iter().map(|r| r.statistic(criterion)).collect::<Result<Vec<f64>>>()?;
            Ok(CriterionCurve { criterion, ecdf: ecdf(&values), values })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub k: usize,
    pub base_seed: u64,
    /// Test events per instance; `None` matches the training size.
    #[serde(default)]
    pub test_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub losses: Vec<f64>,
    pub boxplot: BoxplotStats,
}

/// For every training size, `k` instances with fresh data and init; each
/// instance trains on a bootstrap sample of `n` pool events and is tested
/// on its own subset of the test pool drawn without replacement.
pub fn sample_size_sweep<E: Executor>(
    spec: &ModelSpec,
    sizes: &[usize],
    plan: &SweepPlan,
    train_pool: &Dataset,
    test_pool: &Dataset,
    cfg: &TrainConfig,
    exec: &E,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    ensure!(plan.k >= 1, "k must be at least 1");
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        ensure!(n >= 1, "training size must be positive");
        let test_n = plan.test_size.unwrap_or(n);
        ensure!(test_n <= test_pool.len(), "test size {test_n} exceeds the test pool of {}", test_pool.len());
        let seeds = instance_seeds(RandomizationMode::BothRandom, derive_seed(plan.base_seed, tag::REPEAT, n as u64), plan.k);
        let runs = exec.map(seeds.len(), |i| -> Result<f64> {
            let (data_seed, init_seed) = seeds[i];
            let train = train_pool.bootstrap_sample(n, data_seed)?;
            let test = test_pool.subsample(test_n, data_seed)?;
            Ok(train_model(Model::new(spec.clone(), init_seed)?, &train, &test, init_seed, cfg)?.final_test_loss)
        });
        let losses = runs.into_iter().collect::<Result<Vec<f64>>>()?;
        rows.push(SweepRow { n, boxplot: boxplot(&losses)?, losses });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_source_modes_fix_one_seed() {
        let f = instance_seeds(RandomizationMode::FixedDataRandomInit, 9, 4);
        assert!(f.iter().all(|s| s.0 == f[0].0));
        assert!(f.windows(2).all(|w| w[0].1 != w[1].1));
        let g = instance_seeds(RandomizationMode::RandomDataFixedInit, 9, 4);
        assert!(g.iter().all(|s| s.1 == g[0].1));
        assert!(g.windows(2).all(|w| w[0].0 != w[1].0));
        let b = instance_seeds(RandomizationMode::BothRandom, 9, 4);
        assert!(b.windows(2).all(|w| w[0].0 != w[1].0 && w[0].1 != w[1].1));
    }

    #[test]
    fn max_curve_dominates_mean_curve() {
        let mut recs = Vec::new();
        for (i, l) in [[0.1, 0.4, 0.2], [0.3, 0.3, 0.3], [0.05, 0.9, 0.1]].iter().enumerate() {
            let mut r = RobustnessRecord::new(alloc::format!("m{i}"));
            for &v in l {
                r.push(v, InstanceProvenance { init_seed: 0, data_seed: None, stop_epoch: 1, diverged: false });
            }
            recs.push(r);
        }
        let c = criterion_study(&recs, &[SelectionCriterion::Mean, SelectionCriterion::Max]).unwrap();
        for (m, x) in c[0].values.iter().zip(&c[1].values) {
            assert!(x >= m);
        }
    }
}
