//! Conjugate full conditionals of the labels, component parameters and β.

use rand::Rng;

use super::state::{ChainState, DensityCache, EventData};
use crate::error::{Error, Result};
use crate::model::{SpatialPoint, Sym2};
use crate::priors::sample::{sample_mvn2_canonical, sample_wishart};
use crate::priors::Hyperparams;

/// Label probabilities `Pr(z_i = j) ∝ p_{b,j} φ_j(s_i)` for one event.
pub fn label_probabilities(state: &ChainState, data: &EventData, cache: &DensityCache, i: usize) -> Vec<f64> {
    let row = state.mixture.weights.row(data.block[i]);
    let mut w: Vec<f64> = row.iter().zip(cache.scaled(i)).map(|(p, e)| p * e).collect();
    let mut total: f64 = w.iter().sum();
    if !(total > 1e-280) {
        // underflow of every product: fall back to log-sum-exp
        let lw: Vec<f64> = row.iter().zip(cache.log_phi(i)).map(|(p, l)| p.ln() + l).collect();
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w = lw.iter().map(|l| (l - m).exp()).collect();
        total = w.iter().sum();
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Redraws every label from its categorical full conditional.
pub fn update_labels<R: Rng + ?Sized>(state: &mut ChainState, data: &EventData, cache: &DensityCache, rng: &mut R) {
    let k = state.k();
    state.labels.resize(data.len(), 0);
    if k == 1 {
        state.labels.iter_mut().for_each(|z| *z = 0);
        return;
    }
    let mut w = vec![0.0; k];
    for i in 0..data.len() {
        let row = state.mixture.weights.row(data.block[i]);
        let sc = cache.scaled(i);
        let mut total = 0.0;
        for j in 0..k {
            total += row[j] * sc[j];
            w[j] = total;
        }
        let z = if total > 1e-280 {
            let u = rng.random::<f64>() * total;
            w.iter().position(|&c| u < c).unwrap_or(k - 1)
        } else {
            let p = label_probabilities(state, data, cache, i);
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            p.iter()
                .position(|&v| {
                    acc += v;
                    u < acc
                })
                .unwrap_or(k - 1)
        };
        state.labels[i] = z;
    }
}

/// Per-component label counts, coordinate sums and the points themselves.
fn assigned(state: &ChainState, data: &EventData) -> Vec<(usize, [f64; 2])> {
    let mut acc = vec![(0usize, [0.0; 2]); state.k()];
    for (i, &z) in state.labels.iter().enumerate() {
        let s = data.points[i];
        acc[z].0 += 1;
        acc[z].1[0] += s.x;
        acc[z].1[1] += s.y;
    }
    acc
}

/// Precision `P_j = κ + n_j Σ_j⁻¹` and linear term `κξ + Σ_j⁻¹ Σ s` of μ_j's full conditional.
pub fn mean_conditional(state: &ChainState, data: &EventData, hp: &Hyperparams, j: usize) -> Result<(Sym2<f64>, [f64; 2])> {
    let (n, sum) = assigned(state, data)[j];
    mean_conditional_from(&state.mixture.components[j].sigma, n, sum, hp)
}

fn mean_conditional_from(sigma: &Sym2<f64>, n: usize, sum: [f64; 2], hp: &Hyperparams) -> Result<(Sym2<f64>, [f64; 2])> {
    let prec = sigma.inverse().ok_or_else(|| Error::NotPositiveDefinite { what: "component covariance".into() })?;
    let p = hp.kappa.add(&prec.scale(n as f64));
    let a = hp.kappa.mul_vec(hp.xi.as_array());
    let b = prec.mul_vec(sum);
    Ok((p, [a[0] + b[0], a[1] + b[1]]))
}

pub fn update_means<R: Rng + ?Sized>(state: &mut ChainState, data: &EventData, hp: &Hyperparams, rng: &mut R) -> Result<()> {
    let stats = assigned(state, data);
    for (j, (n, sum)) in stats.into_iter().enumerate() {
        let (p, lin) = mean_conditional_from(&state.mixture.components[j].sigma, n, sum, hp)?;
        state.mixture.components[j].mu = sample_mvn2_canonical(&p, lin, rng)?;
    }
    Ok(())
}

/// Degrees of freedom `2α + n_j` and scale `(2β + S_j)⁻¹` of Σ_j⁻¹'s full conditional.
pub fn covariance_conditional(state: &ChainState, data: &EventData, hp: &Hyperparams, j: usize) -> Result<(f64, Sym2<f64>)> {
    let mu = state.mixture.components[j].mu;
    let mut n = 0usize;
    let mut s = Sym2::zero();
    for (i, &z) in state.labels.iter().enumerate() {
        if z == j {
            n += 1;
            s = s.add(&Sym2::outer(data.points[i].sub(&mu)));
        }
    }
    covariance_conditional_from(n, s, &state.beta, hp)
}

fn covariance_conditional_from(n: usize, scatter: Sym2<f64>, beta: &Sym2<f64>, hp: &Hyperparams) -> Result<(f64, Sym2<f64>)> {
    let scale = beta
        .scale(2.0)
        .add(&scatter)
        .inverse()
        .ok_or_else(|| Error::NotPositiveDefinite { what: "2β + S".into() })?;
    Ok((2.0 * hp.alpha + n as f64, scale))
}

pub fn update_covariances<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &EventData,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let k = state.k();
    let mut n = vec![0usize; k];
    let mut scatter = vec![Sym2::zero(); k];
    let mus: Vec<SpatialPoint<f64>> = state.mixture.components.iter().map(|c| c.mu).collect();
    for (i, &z) in state.labels.iter().enumerate() {
        n[z] += 1;
        let d = data.points[i].sub(&mus[z]);
        let sc = &mut scatter[z];
        sc.xx += d[0] * d[0];
        sc.xy += d[0] * d[1];
        sc.yy += d[1] * d[1];
    }
    for j in 0..k {
        let (df, scale) = covariance_conditional_from(n[j], scatter[j], &state.beta, hp)?;
        let w = sample_wishart(df, &scale, rng)?;
        state.mixture.components[j].sigma =
            w.inverse().ok_or_else(|| Error::NotPositiveDefinite { what: format!("drawn precision of component {}", j + 1) })?;
    }
    Ok(())
}

/// Degrees of freedom `2g + 2αK` and scale `(2h + 2 Σ_j Σ_j⁻¹)⁻¹` of β's full conditional.
pub fn beta_conditional(state: &ChainState, hp: &Hyperparams) -> Result<(f64, Sym2<f64>)> {
    let mut acc = hp.h.scale(2.0);
    for c in &state.mixture.components {
        let prec = c.sigma.inverse().ok_or_else(|| Error::NotPositiveDefinite { what: "component covariance".into() })?;
        acc = acc.add(&prec.scale(2.0));
    }
    let scale = acc.inverse().ok_or_else(|| Error::NotPositiveDefinite { what: "2h + 2ΣΣ⁻¹".into() })?;
    Ok((2.0 * hp.g + 2.0 * hp.alpha * state.k() as f64, scale))
}

pub fn update_beta<R: Rng + ?Sized>(state: &mut ChainState, hp: &Hyperparams, rng: &mut R) -> Result<()> {
    let (df, scale) = beta_conditional(state, hp)?;
    state.beta = sample_wishart(df, &scale, rng)?;
    Ok(())
}
