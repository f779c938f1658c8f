//! Std companion of `rlab-core`: dataset files, TOML experiment configs,
//! a rayon-backed executor, the external-trainer bridge and the commands
//! behind the `rlab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod external;
pub mod format;
pub mod pool;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use pool::Pool;
