//! Draws from the prior families.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use nalgebra::DVector;

use super::car::{precision_matrix, CarNeighborhood, C_PRIOR_VAR, NU2_MAX, RHO_MAX};
use super::density::half_inverse;
use super::hyper::Hyperparams;
use crate::error::{Error, Result};
use crate::model::{Chol2, Component, SpatialPoint, Sym2};

/// `x ~ N(mean, cov)` given the Cholesky factor of `cov`.
pub fn sample_mvn2<R: Rng + ?Sized>(mean: &SpatialPoint<f64>, cov_chol: &Chol2<f64>, rng: &mut R) -> SpatialPoint<f64> {
    let z = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
    let d = cov_chol.mul_vec(z);
    SpatialPoint::new(mean.x + d[0], mean.y + d[1])
}

/// `x ~ N(precision⁻¹ b, precision⁻¹)` via the precision's factor.
pub fn sample_mvn2_canonical<R: Rng + ?Sized>(
    precision: &Sym2<f64>,
    b: [f64; 2],
    rng: &mut R,
) -> Result<SpatialPoint<f64>> {
    let l = precision
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { what: "posterior precision of a component mean".into() })?;
    let mean = l.solve_upper(l.solve_lower(b));
    let z = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
    let d = l.solve_upper(z);
    Ok(SpatialPoint::new(mean[0] + d[0], mean[1] + d[1]))
}

/// Bartlett draw from `Wishart(n, scale)`, `E = n · scale`, `n > 1`.
pub fn sample_wishart<R: Rng + ?Sized>(n: f64, scale: &Sym2<f64>, rng: &mut R) -> Result<Sym2<f64>> {
    let l = scale
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { what: "Wishart scale matrix".into() })?;
    let c1 = ChiSquared::new(n).map_err(|e| Error::Domain(format!("chi-square({n}): {e}")))?;
    let c2 = ChiSquared::new(n - 1.0).map_err(|e| Error::Domain(format!("chi-square({}): {e}", n - 1.0)))?;
    let a11 = c1.sample(rng).sqrt();
    let a21: f64 = rng.sample(StandardNormal);
    let a22 = c2.sample(rng).sqrt();
    // B = L A, W = B Bᵀ
    let b11 = l.l11 * a11;
    let b21 = l.l21 * a11 + l.l22 * a21;
    let b22 = l.l22 * a22;
    Ok(Sym2::new(b11 * b11, b11 * b21, b21 * b21 + b22 * b22))
}

/// `β ~ Wishart(2g, (2h)⁻¹)`.
pub fn sample_beta_prior<R: Rng + ?Sized>(hp: &Hyperparams, rng: &mut R) -> Result<Sym2<f64>> {
    let scale = half_inverse(&hp.h).ok_or_else(|| Error::NotPositiveDefinite { what: "h".into() })?;
    sample_wishart(2.0 * hp.g, &scale, rng)
}

/// `μ ~ N(ξ, κ⁻¹)`, `Σ⁻¹ ~ Wishart(2α, (2β)⁻¹)`.
pub fn sample_prior_component<R: Rng + ?Sized>(hp: &Hyperparams, beta: &Sym2<f64>, rng: &mut R) -> Result<Component<f64>> {
    let cov = hp.kappa.inverse().and_then(|m| m.cholesky()).ok_or_else(|| Error::NotPositiveDefinite {
        what: "kappa".into(),
    })?;
    let mu = sample_mvn2(&hp.xi, &cov, rng);
    let scale = half_inverse(beta).ok_or_else(|| Error::NotPositiveDefinite { what: "beta".into() })?;
    let prec = sample_wishart(2.0 * hp.alpha, &scale, rng)?;
    let sigma = prec.inverse().ok_or_else(|| Error::NotPositiveDefinite { what: "sampled precision".into() })?;
    Ok(Component::new(mu, sigma))
}

/// `(c, ρ, ν²)` from `N(0, 10⁴) × U(0, 0.25) × U(0, 10⁴)`.
pub fn sample_car_hyper_prior<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let c = C_PRIOR_VAR.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let rho = RHO_MAX * rng.random::<f64>();
    // (0, max]: 1 - U avoids an exact zero
    let nu2 = NU2_MAX * (1.0 - rng.random::<f64>());
    (c, rho, nu2)
}

/// One column from the CAR joint normal `N(c·1, Q⁻¹)`, `Q = (I - ρA) / ν²`.
pub fn sample_car_column<R: Rng + ?Sized>(c: f64, rho: f64, nu2: f64, nb: &CarNeighborhood, rng: &mut R) -> Result<Vec<f64>> {
    let q = precision_matrix(rho, nu2, nb)?;
    let chol = q.cholesky().ok_or_else(|| Error::NotPositiveDefinite { what: "CAR precision".into() })?;
    let z = DVector::from_fn(nb.block(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // Q = L Lᵀ, x = c + L⁻ᵀ z has covariance Q⁻¹
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite { what: "CAR precision factor".into() })?;
    Ok(x.iter().map(|v| c + v).collect())
}
