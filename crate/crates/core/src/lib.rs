//! Bayesian inference for a spatio-temporal Poisson point process whose
//! spatial density is a Gaussian mixture with seasonal, conditionally
//! autoregressive mixture weights.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod scalar;
pub mod synthesis;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Point = model::SpatialPoint<f64>;
pub type Point32 = model::SpatialPoint<f32>;
pub type Matrix2 = model::Sym2<f64>;
pub type Matrix2F32 = model::Sym2<f32>;
pub type Gaussian = model::Component<f64>;
pub type Gaussian32 = model::Component<f32>;
pub type Region = model::StudyRegion<f64>;
pub type Region32 = model::StudyRegion<f32>;
pub type Weights = model::WeightMatrix<f64>;
pub type Weights32 = model::WeightMatrix<f32>;
pub type Mixture = model::MixtureState<f64>;
pub type Mixture32 = model::MixtureState<f32>;
