//! Mixture-density mathematics, weight transforms, seasonal indexing and
//! study-region quadrature.

pub mod event;
pub mod gaussian;
pub mod geometry;
pub mod linalg;
pub mod logit;
pub mod mixture;
pub mod quadrature;

pub use event::{bucket_by_period, Event};
pub use gaussian::{gaussian_pdf2d, Component, GaussianKernel};
pub use geometry::{point_in_polygon, Axis, IntegrationGrid, IntegrationNode, SpatialPoint, StudyRegion};
pub use linalg::{Chol2, Sym2};
pub use logit::{inverse_logit, inverse_logit_log, log_jacobian, logit_transform};
pub use mixture::{
    block_constants, component_masses, mixture_density, normalize_to_region, region_masses, MixtureEvaluator, MixtureState,
    SeasonalityConfig, WeightMatrix,
};
pub use quadrature::{normal_cdf, normal_interval, StripQuadrature};
