// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod crosscov;
pub mod data;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod simulate;
pub mod sparse_svd;
pub mod spectral;
pub mod spline;

pub use error::{FacdError, Result};
pub use scalar::Scalar;

pub type Model = pipeline::FacdModel<f64>;
pub type Model32 = pipeline::FacdModel<f32>;
pub type Dataset = data::LongitudinalDataset<f64>;
pub type Dataset32 = data::LongitudinalDataset<f32>;
pub type Component = pipeline::CanonicalComponent<f64>;
pub type Component32 = pipeline::CanonicalComponent<f32>;
pub type Eigen = spectral::EigenSystem<f64>;
pub type Eigen32 = spectral::EigenSystem<f32>;
