//! Toy calorimeter: parametric shower generator, dataset containers and
//! the resampling used by every experiment.

pub mod dataset;
pub mod generator;

pub use dataset::{generate_at, sample_size_schedule, Dataset, Provenance, SCHEDULE_MAX_INDEX};
pub use generator::{generate_event, DatasetKind, EventRecord, GeneratorConfig};

/// Cells per side of the cluster grid.
pub const GRID: usize = 15;
/// Cells in a cluster.
pub const CELLS: usize = GRID * GRID;
/// Index of the central row/column.
pub const CENTER: usize = GRID / 2;
