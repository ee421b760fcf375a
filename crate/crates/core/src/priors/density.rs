//! Log densities of the prior families and the joint log prior.

use statrs::function::gamma::ln_gamma;

use super::car::{car_log_density, CarNeighborhood, CarState, C_PRIOR_VAR, NU2_MAX, RHO_MAX};
use super::hyper::Hyperparams;
use crate::model::{Component, SpatialPoint, Sym2};

/// `log N(x; mean, precision⁻¹)` in two dimensions.
pub fn mvn2_log_pdf(x: &SpatialPoint<f64>, mean: &SpatialPoint<f64>, precision: &Sym2<f64>) -> f64 {
    let d = x.sub(mean);
    -std::f64::consts::TAU.ln() + 0.5 * precision.det().ln() - 0.5 * precision.quad(d)
}

pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (std::f64::consts::TAU * var).ln() - 0.5 * (x - mean) * (x - mean) / var
}

/// `log Wishart(w; n, v)` for 2×2 matrices, parameterized so `E[w] = n v`.
pub fn wishart_log_pdf(w: &Sym2<f64>, n: f64, v: &Sym2<f64>) -> f64 {
    if !w.is_positive_definite() {
        return f64::NEG_INFINITY;
    }
    let v_inv = match v.inverse() {
        Some(m) => m,
        None => return f64::NEG_INFINITY,
    };
    let ln_mgamma = 0.5 * std::f64::consts::PI.ln() + ln_gamma(0.5 * n) + ln_gamma(0.5 * n - 0.5);
    0.5 * (n - 3.0) * w.det().ln() - 0.5 * v_inv.trace_prod(w) - n * std::f64::consts::LN_2 - 0.5 * n * v.det().ln()
        - ln_mgamma
}

/// `(2m)⁻¹` for a positive definite `m`.
pub fn half_inverse(m: &Sym2<f64>) -> Option<Sym2<f64>> {
    m.scale(2.0).inverse()
}

/// Log prior of a full parameter set. Returns `-∞` outside the support.
///
/// Terms: `N(ξ, κ⁻¹)` per mean, `Wishart(2α, (2β)⁻¹)` per inverse covariance,
/// `Wishart(2g, (2h)⁻¹)` for β, the CAR joint normal per log-odds column,
/// and `N(0, 10⁴)`, `U(0, 0.25)`, `U(0, 10⁴)` on `c_r`, `ρ_r`, `ν²_r`.
pub fn log_prior(
    components: &[Component<f64>],
    beta: &Sym2<f64>,
    car: &CarState,
    hp: &Hyperparams,
    nb: &CarNeighborhood,
) -> f64 {
    let mut lp = 0.0;
    let Some(sigma_scale) = half_inverse(beta) else {
        return f64::NEG_INFINITY;
    };
    for c in components {
        lp += mvn2_log_pdf(&c.mu, &hp.xi, &hp.kappa);
        match c.sigma.inverse() {
            Some(prec) => lp += wishart_log_pdf(&prec, 2.0 * hp.alpha, &sigma_scale),
            None => return f64::NEG_INFINITY,
        }
    }
    let Some(beta_scale) = half_inverse(&hp.h) else {
        return f64::NEG_INFINITY;
    };
    lp += wishart_log_pdf(beta, 2.0 * hp.g, &beta_scale);
    lp + car_log_prior(car, nb)
}

/// CAR joint densities plus the hyperprior terms for every column.
pub fn car_log_prior(car: &CarState, nb: &CarNeighborhood) -> f64 {
    let mut lp = 0.0;
    for r in 0..car.cols {
        lp += car_hyper_log_prior(car.c[r], car.rho[r], car.nu2[r]);
        lp += car_log_density(&car.column(r), car.c[r], car.rho[r], car.nu2[r], nb);
    }
    lp
}

/// `log N(c; 0, 10⁴) + log U(ρ; 0, 0.25) + log U(ν²; 0, 10⁴)`.
pub fn car_hyper_log_prior(c: f64, rho: f64, nu2: f64) -> f64 {
    if !(rho >= 0.0 && rho < RHO_MAX) || !(nu2 > 0.0 && nu2 <= NU2_MAX) {
        return f64::NEG_INFINITY;
    }
    normal_log_pdf(c, 0.0, C_PRIOR_VAR) - RHO_MAX.ln() - NU2_MAX.ln()
}
