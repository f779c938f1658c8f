//! Losses, the windowed early-stopping rule and the training loop.

pub mod early_stop;
pub mod loss;
pub mod trainer;

pub use early_stop::{should_stop, EarlyStopConfig};
pub use loss::{relative_rmse, rmse_coordinate};
pub use trainer::{evaluate, train_instance, train_model, Batch, TrainConfig, TrainedInstance};
