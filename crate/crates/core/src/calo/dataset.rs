use alloc::vec::Vec;
use core::ops::Range;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::generator::{generate_event, EventRecord, GeneratorConfig};
use crate::error::{ensure, Result};
use crate::rng::{self, tag};

/// Where a generated dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: GeneratorConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<EventRecord>,
    /// Set for generated datasets; resampled subsets keep their parent's.
    pub provenance: Option<Provenance>,
}

/// Event `index` of the stream addressed by `seed`. Events are independent
/// of each other, so any partition of the index range reproduces the same
/// records.
pub fn generate_at(config: &GeneratorConfig, seed: u64, index: u64) -> EventRecord {
    generate_event(config, &mut rng::substream(rng::derive_seed(seed, tag::EVENT, 0), index))
}

impl Dataset {
    pub fn generate(config: GeneratorConfig, events: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        ensure!(events >= 1, "cannot generate an empty dataset");
        Ok(Self {
            records: Self::generate_range(&config, seed, 0..events as u64),
            provenance: Some(Provenance { config, seed }),
        })
    }

    pub fn generate_range(config: &GeneratorConfig, seed: u64, range: Range<u64>) -> Vec<EventRecord> {
        range.map(|i| generate_at(config, seed, i)).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn derived(&self, records: Vec<EventRecord>) -> Self {
        Self { records, provenance: self.provenance }
    }

    /// Random disjoint split; the first part holds `round(ratio * n)` events.
    pub fn split_fixed(&self, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        ensure!(!self.is_empty(), "cannot split an empty dataset");
        ensure!((0.0..=1.0).contains(&ratio), "split ratio must lie in [0, 1]");
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::substream(seed, tag::SPLIT));
        let cut = libm::round(ratio * self.len() as f64) as usize;
        let pick = |ids: &[usize]| ids.iter().map(|&i| self.records[i].clone()).collect();
        Ok((self.derived(pick(&idx[..cut])), self.derived(pick(&idx[cut..]))))
    }

    /// `size` draws with replacement.
    pub fn bootstrap_sample(&self, size: usize, seed: u64) -> Result<Dataset> {
        ensure!(!self.is_empty(), "cannot bootstrap from an empty pool");
        ensure!(size >= 1, "bootstrap size must be positive");
        let mut r = rng::substream(seed, tag::DATA);
        let n = self.len();
        Ok(self.derived((0..size).map(|_| self.records[r.random_range(0..n)].clone()).collect()))
    }

    /// `size` distinct events chosen uniformly.
    pub fn subsample(&self, size: usize, seed: u64) -> Result<Dataset> {
        ensure!(size >= 1, "subsample size must be positive");
        ensure!(size <= self.len(), "subsample of {size} from a pool of {}", self.len());
        let mut r = rng::substream(seed, tag::TEST);
        let idx = rand::seq::index::sample(&mut r, self.len(), size);
        Ok(self.derived(idx.iter().map(|i| self.records[i].clone()).collect()))
    }
}

pub const SCHEDULE_MAX_INDEX: usize = 45;

/// Training-sample size of the sweep: `round(2000 * 10^(-1.18 + i * 2.38 / 44))`.
pub fn sample_size_schedule(i: usize) -> Result<usize> {
    ensure!(i <= SCHEDULE_MAX_INDEX, "schedule index {i} outside 0..={SCHEDULE_MAX_INDEX}");
    Ok(libm::round(2000.0 * libm::pow(10.0, -1.18 + i as f64 * 2.38 / 44.0)) as usize)
}
