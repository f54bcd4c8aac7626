//! Local Wasserstein-2 training of stochastic neural networks for mixed
//! continuous and categorical random fields.

pub mod autodiff;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod metric;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod snn;
pub mod trainer;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type MixedSample64 = metric::MixedSample<f64>;
pub type MixedSample32 = metric::MixedSample<f32>;
pub type MixedMetricConfig64 = metric::MixedMetricConfig<f64>;
pub type MixedMetricConfig32 = metric::MixedMetricConfig<f32>;
pub type SnnParams64 = snn::SnnParams<f64>;
pub type SnnParams32 = snn::SnnParams<f32>;
