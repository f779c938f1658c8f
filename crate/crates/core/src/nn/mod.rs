//! Layer catalogue, He initialization, model specifications and the four
//! reference architectures.

pub mod activation;
pub mod init;
pub mod model;
pub mod search;
pub mod spec;

pub use activation::Activation;
pub use model::Model;
pub use search::{reference_search_space, Architecture, SearchSpace};
pub use spec::{build_preset, AuxMode, ConvLayer, ModelSpec, PoolLayer, Preset, Target};
