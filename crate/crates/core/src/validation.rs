//! Goodness of fit for the point process: marginal cumulative intensities,
//! uniform residuals, Q-Q summaries and the Kolmogorov-Smirnov test.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::MIN_REGION_MASS;
use crate::model::{Axis, Component, Event, MixtureState, StripQuadrature, StudyRegion};
use crate::sampler::PosteriorDraw;

/// Region-truncated marginal distributions of a mixture along each axis.
#[derive(Clone, Debug)]
pub struct MarginalIntensity {
    mixture: MixtureState<f64>,
    quads: [StripQuadrature; 2],
    // per axis, per component: cumulative masses at the strip breaks
    cumulative: [Vec<Vec<f64>>; 2],
    normalizers: Vec<f64>,
}

impl MarginalIntensity {
    pub fn new(mixture: &MixtureState<f64>, region: &StudyRegion<f64>) -> Result<Self> {
        mixture.kernels()?;
        let quads = [StripQuadrature::new(region, Axis::X), StripQuadrature::new(region, Axis::Y)];
        let cumulative: [Vec<Vec<f64>>; 2] =
            std::array::from_fn(|a| mixture.components.iter().map(|c| quads[a].cumulative_masses(c)).collect());
        let masses: Vec<f64> = cumulative[0].iter().map(|c| c[c.len() - 1]).collect();
        let w = &mixture.weights;
        let mut normalizers = Vec::with_capacity(w.rows());
        for b in 0..w.rows() {
            let z: f64 = w.row(b).iter().zip(&masses).map(|(p, m)| p * m).sum();
            if !(z >= MIN_REGION_MASS) {
                return Err(Error::DegenerateRegion { block: b + 1, mass: z });
            }
            normalizers.push(z);
        }
        Ok(Self { mixture: mixture.clone(), quads, cumulative, normalizers })
    }

    /// `Λ_{axis,t}(v) = δ ∫_{region, coordinate ≤ v} f_t(s) ds`.
    pub fn cumulative(&self, axis: Axis, v: f64, t: usize, delta: f64) -> f64 {
        let a = axis.index();
        let b = self.mixture.season.block_index(t);
        let below: f64 = self
            .mixture
            .weights
            .row(b)
            .iter()
            .zip(&self.mixture.components)
            .zip(&self.cumulative[a])
            .map(|((p, c), cum): ((&f64, &Component<f64>), _)| p * self.quads[a].mass_below(c, cum, v))
            .sum();
        (delta * below / self.normalizers[b]).min(delta)
    }
}

/// [`MarginalIntensity::cumulative`] for a single evaluation.
pub fn marginal_cumulative_intensity(
    axis: Axis,
    v: f64,
    t: usize,
    mixture: &MixtureState<f64>,
    region: &StudyRegion<f64>,
    delta: f64,
) -> Result<f64> {
    Ok(MarginalIntensity::new(mixture, region)?.cumulative(axis, v, t, delta))
}

/// Residuals of one period along one axis, in order of the sorted coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualGroup {
    pub t: usize,
    pub axis: Axis,
    pub u: Vec<f64>,
}

/// All residuals computed under one posterior draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformResiduals {
    pub draw: usize,
    pub groups: Vec<ResidualGroup>,
    /// Residuals equal to zero from tied coordinates.
    pub ties: usize,
}

impl UniformResiduals {
    pub fn pooled(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|g| g.u.iter().copied()).collect()
    }
}

/// `u = 1 − exp(−(Λ(s̄_i) − Λ(s̄_{i−1})))` over each period's sorted marginals,
/// with `δ_t = n_t` and `Λ(s̄_0) = 0`.
pub fn residuals(events: &[Event], marginal: &MarginalIntensity, draw: usize) -> Result<UniformResiduals> {
    if events.iter().any(|e| e.t == 0) {
        return Err(Error::Input("event periods are 1-based".into()));
    }
    let mut by_period: BTreeMap<usize, Vec<[f64; 2]>> = BTreeMap::new();
    for e in events {
        by_period.entry(e.t).or_default().push(e.location.as_array());
    }
    let mut groups = Vec::new();
    let mut ties = 0;
    for (&t, pts) in &by_period {
        let delta = pts.len() as f64;
        for axis in [Axis::X, Axis::Y] {
            let mut coords: Vec<f64> = pts.iter().map(|p| p[axis.index()]).collect();
            coords.sort_by(f64::total_cmp);
            let mut prev_v = f64::NEG_INFINITY;
            let mut prev = 0.0;
            let mut u = Vec::with_capacity(coords.len());
            for &v in &coords {
                let lam = if v == prev_v { prev } else { marginal.cumulative(axis, v, t, delta) };
                let gap = (lam - prev).max(0.0);
                if gap == 0.0 {
                    ties += 1;
                }
                u.push(-(-gap).exp_m1());
                prev = prev.max(lam);
                prev_v = v;
            }
            groups.push(ResidualGroup { t, axis, u });
        }
    }
    Ok(UniformResiduals { draw, groups, ties })
}

/// Residuals under every posterior draw.
pub fn uniform_residuals(events: &[Event], draws: &[PosteriorDraw], region: &StudyRegion<f64>) -> Result<Vec<UniformResiduals>> {
    draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| residuals(events, &MarginalIntensity::new(&d.mixture, region)?, i))
        .collect()
}

/// Mean Q-Q line with point-wise percentile band across draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqSummary {
    pub theoretical: Vec<f64>,
    pub mean: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

/// Empirical quantiles of each draw's pooled residuals at `(i − ½)/points`,
/// summarized by their mean and 2.5% / 97.5% percentiles across draws.
pub fn qq_summary(sets: &[Vec<f64>], points: usize) -> Result<QqSummary> {
    if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
        return Err(Error::Input("Q-Q summary needs at least one nonempty residual set".into()));
    }
    if points == 0 {
        return Err(Error::Input("Q-Q summary needs at least one quantile".into()));
    }
    let sorted: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| {
            let mut v = s.clone();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let theoretical: Vec<f64> = (1..=points).map(|i| (i as f64 - 0.5) / points as f64).collect();
    let (mut mean, mut low, mut high) = (Vec::new(), Vec::new(), Vec::new());
    for &q in &theoretical {
        let mut at: Vec<f64> = sorted
            .iter()
            .map(|s| {
                let k = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
                s[k - 1]
            })
            .collect();
        mean.push(at.iter().sum::<f64>() / at.len() as f64);
        at.sort_by(f64::total_cmp);
        low.push(percentile(&at, 0.025));
        high.push(percentile(&at, 0.975));
    }
    Ok(QqSummary { theoretical, mean, low, high })
}

/// One-sample Kolmogorov-Smirnov statistic against U(0, 1).
pub fn ks_statistic(u: &[f64]) -> f64 {
    let mut v = u.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` values, with the
/// `√n + 0.12 + 0.11/√n` small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Whether `u` is consistent with U(0, 1) at level `alpha`.
pub fn ks_uniform_passes(u: &[f64], alpha: f64) -> bool {
    ks_pvalue(ks_statistic(u), u.len()) >= alpha
}
