//! Multinomial logit map between the open simplex and `R^{K-1}`.
//!
//! The last category is the reference: `π_r = log(p_r / p_K)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maps a probability vector of length `K` to `K - 1` log-odds against the last entry.
pub fn logit_transform<T: Real>(p: &[T]) -> Result<Vec<T>> {
    if p.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    let mut sum = T::zero();
    for (i, &v) in p.iter().enumerate() {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::Domain(format!("probability entry {i} = {v} is not strictly positive")));
        }
        sum = sum + v;
    }
    let tol = T::epsilon().sqrt();
    if (sum - T::one()).abs() > tol {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    let log_ref = p[p.len() - 1].ln();
    Ok(p[..p.len() - 1].iter().map(|&v| v.ln() - log_ref).collect())
}

/// Log-probabilities for log-odds `pi` (length `K - 1`), overflow safe.
pub fn inverse_logit_log<T: Real>(pi: &[T]) -> Vec<T> {
    let m = pi.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let denom = pi.iter().fold((-m).exp(), |acc, &v| acc + (v - m).exp());
    let log_denom = m + denom.ln();
    pi.iter().map(|&v| v - log_denom).chain(std::iter::once(-log_denom)).collect()
}

/// Probability vector of length `K` for log-odds `pi` of length `K - 1`.
pub fn inverse_logit<T: Real>(pi: &[T]) -> Vec<T> {
    let m = pi.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let ref_term = (-m).exp();
    let mut out: Vec<T> = pi.iter().map(|&v| (v - m).exp()).collect();
    let denom = out.iter().fold(ref_term, |acc, &v| acc + v);
    for v in out.iter_mut() {
        *v = *v / denom;
    }
    out.push(ref_term / denom);
    out
}

/// `log |∂π/∂(p_1..p_{K-1})|` = `-Σ_j log p_j` over all `K` entries.
pub fn log_jacobian<T: Real>(p: &[T]) -> T {
    p.iter().fold(T::zero(), |acc, &v| acc - v.ln())
}
