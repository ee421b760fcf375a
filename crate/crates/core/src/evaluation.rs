//! Predictive accuracy, Monte Carlo error and convergence diagnostics, and
//! operational coverage of forecast densities.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::model::{Axis, Event, GaussianKernel, SeasonalityConfig, SpatialPoint, StudyRegion, WeightMatrix};
use crate::sampler::PosteriorDraw;

/// Forecast density `f̂_t(s)` for period `t`.
pub trait PeriodDensity: Sync {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64;
}

impl<F: Fn(usize, &SpatialPoint<f64>) -> f64 + Sync> PeriodDensity for F {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64 {
        self(t, s)
    }
}

/// A forecast with the method name used in reports.
pub struct ScoredDensity<'a> {
    pub label: String,
    pub density: &'a dyn PeriodDensity,
}

/// Region-truncated, renormalized mixture density of one posterior draw.
#[derive(Clone, Debug)]
pub struct DrawDensity {
    kernels: Vec<GaussianKernel<f64>>,
    weights: WeightMatrix<f64>,
    season: SeasonalityConfig,
    normalizers: Vec<f64>,
    region: StudyRegion<f64>,
}

/// Smallest per-block region mass a forecast accepts.
pub const MIN_REGION_MASS: f64 = 1e-10;

impl DrawDensity {
    pub fn new(draw: &PosteriorDraw, region: &StudyRegion<f64>) -> Result<Self> {
        if let Some((b, &z)) = draw.normalizers.iter().enumerate().find(|(_, z)| !(**z >= MIN_REGION_MASS)) {
            return Err(Error::DegenerateRegion { block: b + 1, mass: z });
        }
        Ok(Self {
            kernels: draw.mixture.kernels()?,
            weights: draw.mixture.weights.clone(),
            season: draw.mixture.season,
            normalizers: draw.normalizers.clone(),
            region: region.clone(),
        })
    }
}

impl PeriodDensity for DrawDensity {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64 {
        if t == 0 || !self.region.contains(s) {
            return 0.0;
        }
        let b = self.season.block_index(t);
        let f: f64 = self.weights.row(b).iter().zip(&self.kernels).map(|(p, k)| p * k.pdf(s)).sum();
        f / self.normalizers[b]
    }
}

/// Pointwise mean of per-draw densities (the posterior predictive density).
#[derive(Clone, Debug)]
pub struct PosteriorMeanDensity {
    draws: Vec<DrawDensity>,
}

impl PosteriorMeanDensity {
    pub fn new(draws: &[PosteriorDraw], region: &StudyRegion<f64>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Input("no posterior draws".into()));
        }
        Ok(Self { draws: draws.iter().map(|d| DrawDensity::new(d, region)).collect::<Result<_>>()? })
    }
}

impl PeriodDensity for PosteriorMeanDensity {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64 {
        self.draws.iter().map(|d| d.density(t, s)).sum::<f64>() / self.draws.len() as f64
    }
}

/// Average log score of test events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Nats per event; `-inf` when an event has zero density.
    pub pa: f64,
    pub events: usize,
    /// Events whose density was raised to the floor.
    pub floored: usize,
    /// Indices of events with zero (or non-finite) density.
    pub zero_density: Vec<usize>,
}

fn score(events: &[Event], f: &dyn PeriodDensity, floor: Option<f64>) -> Result<Score> {
    if events.is_empty() {
        return Err(Error::Input("no test events".into()));
    }
    let (mut total, mut floored, mut zero) = (0.0, 0, Vec::new());
    for (i, e) in events.iter().enumerate() {
        let mut v = f.density(e.t, &e.location);
        if let Some(fl) = floor {
            if !(v >= fl) {
                v = fl;
                floored += 1;
            }
        }
        if !(v > 0.0) || !v.is_finite() {
            zero.push(i);
            total = f64::NEG_INFINITY;
        } else if total.is_finite() {
            total += v.ln();
        }
    }
    Ok(Score { pa: total / events.len() as f64, events: events.len(), floored, zero_density: zero })
}

/// `(1/Σ n_t) Σ_t Σ_i log f̂_t(s_{t,i})`.
pub fn predictive_accuracy(events: &[Event], f: &dyn PeriodDensity) -> Result<Score> {
    score(events, f, None)
}

/// Density floor applied to grid baselines before scoring, per km².
pub const GRID_DENSITY_FLOOR: f64 = 1e-12;

/// [`predictive_accuracy`] with densities below `floor` raised to it and counted.
pub fn predictive_accuracy_floored(events: &[Event], f: &dyn PeriodDensity, floor: f64) -> Result<Score> {
    score(events, f, Some(floor))
}

/// Log density of each event, with densities below `floor` raised to it.
pub fn event_log_densities(events: &[Event], f: &dyn PeriodDensity, floor: Option<f64>) -> Vec<f64> {
    events
        .iter()
        .map(|e| {
            let v = f.density(e.t, &e.location);
            match floor {
                Some(fl) if !(v >= fl) => fl.ln(),
                _ => v.ln(),
            }
        })
        .collect()
}

/// Mean and normal-approximation confidence half-width of independent values.
pub fn normal_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level {level} outside (0, 1)")));
    }
    if values.len() < 2 {
        return Err(Error::Diagnostic(format!("{} values; need at least 2", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = Normal::new(0.0, 1.0).map_err(|e| Error::Diagnostic(e.to_string()))?.inverse_cdf(0.5 + level / 2.0);
    Ok((mean, z * (var / n).sqrt()))
}

/// Posterior Monte Carlo predictive accuracy and its per-draw terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureScore {
    pub pa: f64,
    pub per_draw: Vec<f64>,
}

/// Mean over draws of the per-draw predictive accuracy.
pub fn pa_mix(events: &[Event], draws: &[PosteriorDraw], region: &StudyRegion<f64>) -> Result<MixtureScore> {
    if draws.is_empty() {
        return Err(Error::Input("no posterior draws".into()));
    }
    let per_draw = draws
        .par_iter()
        .map(|d| predictive_accuracy(events, &DrawDensity::new(d, region)?).map(|s| s.pa))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MixtureScore { pa: per_draw.iter().sum::<f64>() / per_draw.len() as f64, per_draw })
}

/// Mean and confidence half-width from `⌊√M⌋` nonoverlapping batch means.
///
/// The mean is over all `M` values; the variance uses the first
/// `⌊√M⌋·⌊M/⌊√M⌋⌋` of them.
pub fn batch_means_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level {level} outside (0, 1)")));
    }
    let m = values.len();
    let a = (m as f64).sqrt().floor() as usize;
    if a < 4 {
        return Err(Error::Diagnostic(format!("{m} values give fewer than 4 batches")));
    }
    let size = m / a;
    let means: Vec<f64> = values[..a * size].chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / a as f64;
    let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (a - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (a - 1) as f64).map_err(|e| Error::Diagnostic(e.to_string()))?;
    let mult = t.inverse_cdf(0.5 + level / 2.0);
    let mean = values.iter().sum::<f64>() / m as f64;
    Ok((mean, mult * (var / a as f64).sqrt()))
}

/// Sample autocorrelations at lags `0..n` by FFT.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if c0 == 0.0 {
        return vec![0.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// `N / (1 + 2 Σ ρ̂_k)`, summing autocorrelations in adjacent pairs until the
/// first negative pair sum. A constant chain has ESS `N`.
pub fn effective_sample_size(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 {
        return Err(Error::Diagnostic(format!("chain of length {n} is too short (need 10)")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostic("chain has non-finite values".into()));
    }
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Ok(n as f64);
    }
    let rho = autocorrelation(x);
    let mut sum = 0.0;
    let mut k = 1;
    while k + 1 < n {
        let pair = rho[k] + rho[k + 1];
        if pair < 0.0 {
            break;
        }
        sum += pair;
        k += 2;
    }
    Ok(n as f64 / (1.0 + 2.0 * sum))
}

/// Potential scale reduction `√((W(n−1)/n + B/n) / W)` of equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Diagnostic("need at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("chains must have equal length of at least 2".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(Error::Diagnostic("zero within-chain variance".into()));
    }
    let nf = n as f64;
    Ok(((w * (nf - 1.0) / nf + b / nf) / w).sqrt())
}

/// Bases, travel speed and response-time thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeConfig {
    pub bases: Vec<SpatialPoint<f64>>,
    /// km per hour.
    pub speed: f64,
    /// Seconds, increasing.
    pub thresholds: Vec<f64>,
}

/// Median Toronto EMS trip speed, km/h.
pub const DEFAULT_SPEED: f64 = 46.44;

impl ResponseTimeConfig {
    /// Default speed and thresholds 60, 70, …, 300 s.
    pub fn new(bases: Vec<SpatialPoint<f64>>) -> Self {
        Self { bases, speed: DEFAULT_SPEED, thresholds: (6..=30).map(|k| k as f64 * 10.0).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) || !self.speed.is_finite() {
            return Err(Error::Config(format!("speed must be positive, got {}", self.speed)));
        }
        if self.bases.is_empty() || self.bases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("need at least one finite base location".into()));
        }
        if self.thresholds.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("thresholds must be nonnegative and increasing".into()));
        }
        Ok(())
    }

    /// L1 travel distance (km) reachable in `seconds`.
    pub fn radius(&self, seconds: f64) -> f64 {
        self.speed * seconds / 3600.0
    }

    /// L1 distance to the nearest base.
    pub fn nearest(&self, s: &SpatialPoint<f64>) -> f64 {
        self.bases.iter().map(|b| b.l1_distance(s)).fold(f64::INFINITY, f64::min)
    }
}

/// Sorted disjoint intervals `a ∩ b`.
fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn length_within(iv: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    iv.iter().map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0)).sum()
}

/// Region grid with the area of every cell reachable within each threshold.
///
/// Areas come from vertical lines through each cell (midpoint rule across,
/// exact along): the region and the union of L1 balls around the bases are
/// intersected as intervals on each line. The density is taken constant over
/// a cell at the centroid of the cell's part of the region.
#[derive(Clone, Debug)]
pub struct CoverageGrid {
    pub nodes: Vec<SpatialPoint<f64>>,
    /// Area of each cell inside the region.
    pub area: Vec<f64>,
    /// `covered[k][i]`: area of cell `i` within reach at threshold `k`.
    pub covered: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
}

/// Vertical lines per grid cell used by [`CoverageGrid`].
pub const COVERAGE_LINES: usize = 16;

impl CoverageGrid {
    pub fn new(region: &StudyRegion<f64>, rt: &ResponseTimeConfig, lines_per_cell: usize) -> Result<Self> {
        rt.validate()?;
        if lines_per_cell == 0 {
            return Err(Error::Input("need at least one line per cell".into()));
        }
        let grid = region.integration_grid();
        let h = grid.cell;
        let mut columns: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, node) in grid.nodes.iter().enumerate() {
            columns.entry(node.ix).or_default().push((node.iy, i));
        }
        let n = grid.nodes.len();
        let radii: Vec<f64> = rt.thresholds.iter().map(|&r| rt.radius(r)).collect();
        let mut area = vec![0.0; n];
        let mut covered = vec![vec![0.0; n]; radii.len()];
        let dx = h / lines_per_cell as f64;
        let mut reach: Vec<(f64, f64)> = Vec::new();
        for (&ix, cells) in &columns {
            for l in 0..lines_per_cell {
                let x = grid.origin.x + (ix as f64 + (l as f64 + 0.5) / lines_per_cell as f64) * h;
                let inside = region.scanline(Axis::Y, x);
                if inside.is_empty() {
                    continue;
                }
                for &(iy, i) in cells {
                    let y0 = grid.origin.y + iy as f64 * h;
                    area[i] += dx * length_within(&inside, y0, y0 + h);
                }
                for (k, &rad) in radii.iter().enumerate() {
                    reach.clear();
                    for b in &rt.bases {
                        let half = rad - (x - b.x).abs();
                        if half >= 0.0 {
                            reach.push((b.y - half, b.y + half));
                        }
                    }
                    if reach.is_empty() {
                        continue;
                    }
                    reach.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(reach.len());
                    for &(a, b) in &reach {
                        match merged.last_mut() {
                            Some(last) if a <= last.1 => last.1 = last.1.max(b),
                            _ => merged.push((a, b)),
                        }
                    }
                    let both = intersect(&inside, &merged);
                    for &(iy, i) in cells {
                        let y0 = grid.origin.y + iy as f64 * h;
                        covered[k][i] += dx * length_within(&both, y0, y0 + h);
                    }
                }
            }
        }
        let nodes = grid.nodes.iter().map(|n| n.centroid).collect();
        Ok(Self { nodes, area, covered, thresholds: rt.thresholds.clone() })
    }

    /// Density at every node.
    pub fn node_values(&self, t: usize, f: &dyn PeriodDensity) -> Vec<f64> {
        self.nodes.iter().map(|s| f.density(t, s).max(0.0)).collect()
    }

    /// Covered share of the gridded demand at threshold `k`.
    pub fn fraction_at(&self, values: &[f64], k: usize) -> f64 {
        let total: f64 = values.iter().zip(&self.area).map(|(v, a)| v * a).sum();
        if !(total > 0.0) {
            return 0.0;
        }
        values.iter().zip(&self.covered[k]).map(|(v, a)| v * a).sum::<f64>() / total
    }

    /// Covered share at every threshold for period `t`.
    pub fn curve(&self, t: usize, f: &dyn PeriodDensity) -> Vec<f64> {
        let v = self.node_values(t, f);
        (0..self.thresholds.len()).map(|k| self.fraction_at(&v, k)).collect()
    }
}

/// Share of period `t`'s forecast demand within `seconds` of a base.
pub fn coverage_fraction(
    f: &dyn PeriodDensity,
    t: usize,
    rt: &ResponseTimeConfig,
    region: &StudyRegion<f64>,
    seconds: f64,
) -> Result<f64> {
    let single = ResponseTimeConfig { thresholds: vec![seconds], ..rt.clone() };
    let grid = CoverageGrid::new(region, &single, COVERAGE_LINES)?;
    Ok(grid.curve(t, f)[0])
}

/// Share of events within `seconds` of a base.
pub fn empirical_coverage(points: &[SpatialPoint<f64>], rt: &ResponseTimeConfig, seconds: f64) -> f64 {
    let rad = rt.radius(seconds);
    points.iter().filter(|s| rt.nearest(s) <= rad).count() as f64 / points.len() as f64
}

/// Mean absolute coverage error per threshold, with normal point-wise bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalError {
    pub thresholds: Vec<f64>,
    pub mean_abs_error: Vec<f64>,
    /// `1.96 · sd / √T` of the per-period absolute errors.
    pub half_width: Vec<f64>,
    pub periods_used: usize,
    /// Requested periods without test events.
    pub periods_excluded: usize,
}

/// `(1/T) Σ_t |P_{M,t}(r) − P_{test,t}(r)|` over the requested periods that have test events.
pub fn operational_error(
    f: &dyn PeriodDensity,
    test: &[Event],
    periods: &[usize],
    rt: &ResponseTimeConfig,
    grid: &CoverageGrid,
) -> Result<OperationalError> {
    let by_period = crate::baselines::points_by_period(test);
    let used: Vec<usize> = periods.iter().copied().filter(|t| by_period.get(t).is_some_and(|p| !p.is_empty())).collect();
    if used.is_empty() {
        return Err(Error::Input("no requested period has test events".into()));
    }
    let errors: Vec<Vec<f64>> = used
        .par_iter()
        .map(|&t| {
            let model = grid.curve(t, f);
            let pts = &by_period[&t];
            grid.thresholds.iter().zip(model).map(|(&r, p)| (p - empirical_coverage(pts, rt, r)).abs()).collect()
        })
        .collect();
    let nt = used.len() as f64;
    let nk = grid.thresholds.len();
    let mut mean_abs_error = vec![0.0; nk];
    let mut half_width = vec![0.0; nk];
    for k in 0..nk {
        let m = errors.iter().map(|e| e[k]).sum::<f64>() / nt;
        let sd = if used.len() > 1 {
            (errors.iter().map(|e| (e[k] - m).powi(2)).sum::<f64>() / (nt - 1.0)).sqrt()
        } else {
            0.0
        };
        mean_abs_error[k] = m;
        half_width[k] = 1.96 * sd / nt.sqrt();
    }
    Ok(OperationalError {
        thresholds: grid.thresholds.clone(),
        mean_abs_error,
        half_width,
        periods_used: used.len(),
        periods_excluded: periods.len() - used.len(),
    })
}
