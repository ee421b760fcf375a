//! Bivariate Gaussian mixture components.

use serde::{Deserialize, Serialize};

use super::geometry::SpatialPoint;
use super::linalg::{Chol2, Sym2};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One mixture component: mean (km) and covariance (km²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component<T> {
    pub mu: SpatialPoint<T>,
    pub sigma: Sym2<T>,
}

impl<T: Real> Component<T> {
    pub fn new(mu: SpatialPoint<T>, sigma: Sym2<T>) -> Self {
        Self { mu, sigma }
    }

    pub fn standard() -> Self {
        Self::new(SpatialPoint::new(T::zero(), T::zero()), Sym2::identity())
    }

    /// Precomputes the density evaluator; fails if `sigma` is not positive definite.
    pub fn kernel(&self) -> Result<GaussianKernel<T>> {
        GaussianKernel::new(self)
    }
}

/// Cached log-density evaluator for one component.
#[derive(Clone, Copy, Debug)]
pub struct GaussianKernel<T> {
    mu: SpatialPoint<T>,
    chol: Chol2<T>,
    // -Σ⁻¹/2 entries (xx, 2xy, yy)
    q: [T; 3],
    log_norm: T,
}

impl<T: Real> GaussianKernel<T> {
    pub fn new(c: &Component<T>) -> Result<Self> {
        let chol = c.sigma.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            what: format!(
                "covariance of component at ({}, {}) [{}, {}; {}, {}]",
                c.mu.x, c.mu.y, c.sigma.xx, c.sigma.xy, c.sigma.xy, c.sigma.yy
            ),
        })?;
        let log_norm = -(T::TAU()).ln() - T::lit(0.5) * chol.log_det();
        let p = chol.inverse();
        let h = T::lit(-0.5);
        Ok(Self { mu: c.mu, chol, q: [h * p.xx, h * (p.xy + p.xy), h * p.yy], log_norm })
    }

    pub fn mean(&self) -> SpatialPoint<T> {
        self.mu
    }

    pub fn chol(&self) -> &Chol2<T> {
        &self.chol
    }

    /// Squared Mahalanobis distance of `s` from the mean.
    #[inline]
    pub fn mahalanobis2(&self, s: &SpatialPoint<T>) -> T {
        let z = self.chol.solve_lower(s.sub(&self.mu));
        z[0] * z[0] + z[1] * z[1]
    }

    #[inline]
    pub fn log_pdf(&self, s: &SpatialPoint<T>) -> T {
        let (dx, dy) = (s.x - self.mu.x, s.y - self.mu.y);
        self.log_norm + dx * (self.q[0] * dx + self.q[1] * dy) + self.q[2] * dy * dy
    }

    #[inline]
    pub fn pdf(&self, s: &SpatialPoint<T>) -> T {
        self.log_pdf(s).exp()
    }
}

/// Bivariate normal density φ(s; μ, Σ).
pub fn gaussian_pdf2d<T: Real>(s: &SpatialPoint<T>, c: &Component<T>) -> Result<T> {
    Ok(c.kernel()?.pdf(s))
}
