//! Long-horizon forecasting with an adaptive patch embedding (a sparse
//! mixture of linear sub-extractors) and a hybrid token-mixing stack of
//! selective state-space, feed-forward, convolution and attention layers.

pub mod data;
mod error;
pub mod moa;
pub mod model;
pub mod mof;
pub mod params;
pub mod trace;
pub mod training;

pub use error::{MouError, Result};
pub use model::{ExtractorKind, ModelConfig, MoUModel};
