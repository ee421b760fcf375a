//! Comparison forecasters: grid-cell MEDIC averaging and its kernel density
//! extension, both renormalized to the study region.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PeriodDensity;
use crate::model::geometry::{clip_box, signed_area};
use crate::model::{Component, Event, SpatialPoint, StripQuadrature, StudyRegion, Sym2};

/// Regular grid of square cells; cell `(ix, iy)` has index `iy * nx + ix`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: SpatialPoint<f64>,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: SpatialPoint<f64>, cell_size: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::Input(format!("cell size must be positive, got {cell_size}")));
        }
        if nx == 0 || ny == 0 || !origin.is_finite() {
            return Err(Error::Input("grid needs a finite origin and at least one cell".into()));
        }
        Ok(Self { origin, cell_size, nx, ny })
    }

    /// Smallest grid aligned to multiples of `cell_size` that covers `region`.
    pub fn covering(region: &StudyRegion<f64>, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::Input(format!("cell size must be positive, got {cell_size}")));
        }
        let (lo, hi) = region.bounds();
        let x0 = (lo.x / cell_size).floor() * cell_size;
        let y0 = (lo.y / cell_size).floor() * cell_size;
        let nx = (((hi.x - x0) / cell_size).ceil() as usize).max(1);
        let ny = (((hi.y - y0) / cell_size).ceil() as usize).max(1);
        Self::new(SpatialPoint::new(x0, y0), cell_size, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// `(ix, iy)` of the cell holding `s`; the far edges belong to the last cells.
    pub fn cell_xy(&self, s: &SpatialPoint<f64>) -> Option<(usize, usize)> {
        let fx = (s.x - self.origin.x) / self.cell_size;
        let fy = (s.y - self.origin.y) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.nx as f64 && fy <= self.ny as f64) {
            return None;
        }
        Some(((fx as usize).min(self.nx - 1), (fy as usize).min(self.ny - 1)))
    }

    pub fn cell_of(&self, s: &SpatialPoint<f64>) -> Option<usize> {
        self.cell_xy(s).map(|(ix, iy)| iy * self.nx + ix)
    }

    /// Area of every cell inside `region`.
    pub fn region_areas(&self, region: &StudyRegion<f64>) -> Vec<f64> {
        let h = self.cell_size;
        (0..self.len())
            .map(|i| {
                let x0 = self.origin.x + (i % self.nx) as f64 * h;
                let y0 = self.origin.y + (i / self.nx) as f64 * h;
                signed_area(&clip_box(region.polygon(), x0, y0, x0 + h, y0 + h)).abs()
            })
            .collect()
    }
}

/// Piecewise-constant density on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridDensity {
    /// Value of the cell holding `s`; zero off the grid.
    pub fn at(&self, s: &SpatialPoint<f64>) -> f64 {
        self.grid.cell_of(s).map_or(0.0, |i| self.values[i])
    }

    /// `Σ value × cell area`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `Σ value × area(cell ∩ region)` given [`GridSpec::region_areas`].
    pub fn region_mass(&self, region_areas: &[f64]) -> f64 {
        self.values.iter().zip(region_areas).map(|(v, a)| v * a).sum()
    }
}

/// Share of the period's events in each cell per unit area; `None` when no
/// event falls on the grid. Events off the grid are not counted.
pub fn cell_histogram_density(points: &[SpatialPoint<f64>], grid: &GridSpec) -> Option<GridDensity> {
    let mut counts = vec![0usize; grid.len()];
    let mut n = 0usize;
    for s in points {
        if let Some(i) = grid.cell_of(s) {
            counts[i] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let scale = 1.0 / (n as f64 * grid.cell_area());
    Some(GridDensity { grid: *grid, values: counts.into_iter().map(|c| c as f64 * scale).collect() })
}

/// Offsets (in periods) of the past periods averaged for a target period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRule {
    offsets: Vec<usize>,
}

impl HistoryRule {
    pub fn new(offsets: Vec<usize>) -> Result<Self> {
        if offsets.is_empty() || offsets.contains(&0) {
            return Err(Error::Input("history offsets must be nonempty and strictly positive".into()));
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// The same period in each of the preceding `weeks` weeks.
    pub fn preceding_weeks(weeks: usize, week_len: usize) -> Result<Self> {
        Self::new((1..=weeks).map(|w| w * week_len).collect())
    }

    /// [`preceding_weeks`](Self::preceding_weeks) plus the same weeks one
    /// year (`year_weeks` weeks) earlier.
    pub fn preceding_weeks_two_years(weeks: usize, week_len: usize, year_weeks: usize) -> Result<Self> {
        let mut offsets: Vec<usize> = (1..=weeks).map(|w| w * week_len).collect();
        offsets.extend((1..=weeks).map(|w| (w + year_weeks) * week_len));
        Self::new(offsets)
    }

    /// Named presets: `medic-4w` (four preceding weeks) and `medic-4w-2y`
    /// (those weeks plus the same weeks 52 weeks earlier).
    pub fn preset(name: &str, week_len: usize) -> Result<Self> {
        match name {
            "medic-4w" => Self::preceding_weeks(4, week_len),
            "medic-4w-2y" => Self::preceding_weeks_two_years(4, week_len, 52),
            _ => Err(Error::Config(format!("unknown history rule preset {name:?}"))),
        }
    }

    /// Historical periods for `target`, skipping those before period 1.
    pub fn periods(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().filter(move |&&o| o < target).map(move |&o| target - o)
    }
}

/// Mean of the available historical densities named by `rule`.
pub fn medic_forecast(target: usize, history: &BTreeMap<usize, GridDensity>, rule: &HistoryRule) -> Result<GridDensity> {
    let used: Vec<&GridDensity> = rule.periods(target).filter_map(|t| history.get(&t)).collect();
    let first = used.first().ok_or_else(|| Error::Unavailable(format!("no history for period {target}")))?;
    let mut values = vec![0.0; first.values.len()];
    for d in &used {
        if d.grid != first.grid {
            return Err(Error::Input("historical densities use different grids".into()));
        }
        for (v, x) in values.iter_mut().zip(&d.values) {
            *v += x;
        }
    }
    let m = used.len() as f64;
    values.iter_mut().for_each(|v| *v /= m);
    Ok(GridDensity { grid: first.grid, values })
}

/// Event locations grouped by period.
pub fn points_by_period(events: &[Event]) -> BTreeMap<usize, Vec<SpatialPoint<f64>>> {
    let mut out: BTreeMap<usize, Vec<SpatialPoint<f64>>> = BTreeMap::new();
    for e in events {
        out.entry(e.t).or_default().push(e.location);
    }
    out
}

/// Per-period cell histograms of `events`; empty periods are absent.
pub fn grid_history(events: &[Event], grid: &GridSpec) -> BTreeMap<usize, GridDensity> {
    points_by_period(events)
        .into_iter()
        .filter_map(|(t, pts)| cell_histogram_density(&pts, grid).map(|d| (t, d)))
        .collect()
}

/// MEDIC forecasts for a set of target periods, renormalized to the region.
#[derive(Clone, Debug)]
pub struct MedicForecaster {
    region: StudyRegion<f64>,
    forecasts: BTreeMap<usize, (GridDensity, f64)>,
}

impl MedicForecaster {
    /// Builds the forecast for every target from the histograms of `history`.
    pub fn new(
        history: &[Event],
        grid: &GridSpec,
        rule: &HistoryRule,
        region: &StudyRegion<f64>,
        targets: &[usize],
    ) -> Result<Self> {
        let hist = grid_history(history, grid);
        let areas = grid.region_areas(region);
        let mut forecasts = BTreeMap::new();
        for &t in targets {
            let d = medic_forecast(t, &hist, rule)?;
            let mass = d.region_mass(&areas);
            if !(mass > 1e-10) {
                return Err(Error::DegenerateRegion { block: t, mass });
            }
            forecasts.insert(t, (d, mass));
        }
        Ok(Self { region: region.clone(), forecasts })
    }

    pub fn forecast(&self, t: usize) -> Option<&GridDensity> {
        self.forecasts.get(&t).map(|(d, _)| d)
    }
}

impl PeriodDensity for MedicForecaster {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64 {
        match self.forecasts.get(&t) {
            Some((d, mass)) if self.region.contains(s) => d.at(s) / mass,
            _ => 0.0,
        }
    }
}

fn check_bandwidth(bw: [f64; 2]) -> Result<()> {
    if bw.iter().all(|h| *h > 0.0 && h.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("bandwidths must be positive, got {bw:?}")))
    }
}

/// `φ` of a diagonal-bandwidth product kernel at offset `(dx, dy)`.
#[inline]
fn product_kernel(dx: f64, dy: f64, bw: [f64; 2]) -> f64 {
    let (u, v) = (dx / bw[0], dy / bw[1]);
    (-0.5 * (u * u + v * v)).exp() / (2.0 * std::f64::consts::PI * bw[0] * bw[1])
}

fn kde_sum(s: &SpatialPoint<f64>, points: &[SpatialPoint<f64>], bw: [f64; 2]) -> f64 {
    points.iter().map(|p| product_kernel(s.x - p.x, s.y - p.y, bw)).sum::<f64>() / points.len() as f64
}

/// `(1/n) Σ_i φ(s; s_i, diag(h1², h2²))`.
pub fn kde_density(s: &SpatialPoint<f64>, points: &[SpatialPoint<f64>], bw: [f64; 2]) -> Result<f64> {
    check_bandwidth(bw)?;
    if points.is_empty() {
        return Err(Error::Unavailable("kernel density of a period without events".into()));
    }
    Ok(kde_sum(s, points, bw))
}

/// Mass of a period's KDE inside the region.
pub fn kde_region_mass(points: &[SpatialPoint<f64>], bw: [f64; 2], quad: &StripQuadrature) -> f64 {
    let sigma = Sym2::diag(bw[0] * bw[0], bw[1] * bw[1]);
    points.iter().map(|p| quad.mass(&Component::new(*p, sigma))).sum::<f64>() / points.len() as f64
}

/// Per-period kernel density estimates with one bandwidth pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub bandwidth: [f64; 2],
    pub periods: BTreeMap<usize, Vec<SpatialPoint<f64>>>,
}

impl KdeModel {
    pub fn new(bandwidth: [f64; 2], events: &[Event]) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self { bandwidth, periods: points_by_period(events) })
    }

    pub fn density(&self, t: usize, s: &SpatialPoint<f64>) -> Result<f64> {
        let pts = self.periods.get(&t).ok_or_else(|| Error::Unavailable(format!("no events in period {t}")))?;
        kde_density(s, pts, self.bandwidth)
    }
}

/// Pointwise mean of historical period KDEs.
#[derive(Clone, Debug)]
pub struct KdeForecast<'a> {
    pub bandwidth: [f64; 2],
    pub sources: Vec<&'a [SpatialPoint<f64>]>,
}

impl KdeForecast<'_> {
    pub fn density(&self, s: &SpatialPoint<f64>) -> f64 {
        self.sources.iter().map(|p| kde_sum(s, p, self.bandwidth)).sum::<f64>() / self.sources.len() as f64
    }

    pub fn region_mass(&self, quad: &StripQuadrature) -> f64 {
        self.sources.iter().map(|p| kde_region_mass(p, self.bandwidth, quad)).sum::<f64>() / self.sources.len() as f64
    }
}

/// MEDIC averaging applied to the period KDEs of `model`.
pub fn medic_kde_forecast<'a>(target: usize, model: &'a KdeModel, rule: &HistoryRule) -> Result<KdeForecast<'a>> {
    let sources: Vec<&[SpatialPoint<f64>]> =
        rule.periods(target).filter_map(|t| model.periods.get(&t)).filter(|p| !p.is_empty()).map(|p| p.as_slice()).collect();
    if sources.is_empty() {
        return Err(Error::Unavailable(format!("no history for period {target}")));
    }
    Ok(KdeForecast { bandwidth: model.bandwidth, sources })
}

/// MEDIC-KDE forecasts for a set of target periods, renormalized to the region.
#[derive(Clone, Debug)]
pub struct MedicKdeForecaster {
    model: KdeModel,
    region: StudyRegion<f64>,
    targets: BTreeMap<usize, (Vec<usize>, f64)>,
}

impl MedicKdeForecaster {
    pub fn new(
        history: &[Event],
        bandwidth: [f64; 2],
        rule: &HistoryRule,
        region: &StudyRegion<f64>,
        targets: &[usize],
    ) -> Result<Self> {
        let model = KdeModel::new(bandwidth, history)?;
        let quad = StripQuadrature::new(region, crate::model::Axis::X);
        let masses: BTreeMap<usize, f64> =
            model.periods.iter().map(|(&t, p)| (t, kde_region_mass(p, bandwidth, &quad))).collect();
        let mut out = BTreeMap::new();
        for &t in targets {
            let used: Vec<usize> = rule.periods(t).filter(|p| model.periods.contains_key(p)).collect();
            if used.is_empty() {
                return Err(Error::Unavailable(format!("no history for period {t}")));
            }
            let mass = used.iter().map(|p| masses[p]).sum::<f64>() / used.len() as f64;
            if !(mass > 1e-10) {
                return Err(Error::DegenerateRegion { block: t, mass });
            }
            out.insert(t, (used, mass));
        }
        Ok(Self { model, region: region.clone(), targets: out })
    }

    pub fn bandwidth(&self) -> [f64; 2] {
        self.model.bandwidth
    }
}

impl PeriodDensity for MedicKdeForecaster {
    fn density(&self, t: usize, s: &SpatialPoint<f64>) -> f64 {
        match self.targets.get(&t) {
            Some((used, mass)) if self.region.contains(s) => {
                let bw = self.model.bandwidth;
                used.iter().map(|p| kde_sum(s, &self.model.periods[p], bw)).sum::<f64>() / (used.len() as f64 * mass)
            }
            _ => 0.0,
        }
    }
}

/// Leave-one-week-out folds: the periods of each week present in `periods`.
pub fn week_folds(periods: impl IntoIterator<Item = usize>, week_len: usize) -> Vec<Vec<usize>> {
    let mut by_week: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for t in periods {
        by_week.entry((t - 1) / week_len).or_default().push(t);
    }
    by_week.into_values().collect()
}

/// Outcome of bandwidth cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: [f64; 2],
    /// Held-out predictive accuracy of each candidate, in candidate order.
    pub scores: Vec<f64>,
}

/// Chooses the bandwidth pair with the best held-out predictive accuracy.
///
/// For each fold, every held-out period is forecast by the mean region-normalized
/// KDE of the training periods outside the fold at the same position in the
/// week (same residue modulo `week_len`); the score pools the log densities of
/// all held-out events. Ties go to the smaller `h1 + h2`.
pub fn cv_bandwidth(
    events: &[Event],
    candidates: &[[f64; 2]],
    folds: &[Vec<usize>],
    week_len: usize,
    region: &StudyRegion<f64>,
) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(Error::Input("no bandwidth candidates".into()));
    }
    if folds.len() < 2 {
        return Err(Error::Input(format!("cross-validation needs at least 2 folds, got {}", folds.len())));
    }
    if week_len == 0 {
        return Err(Error::Input("week length must be positive".into()));
    }
    for bw in candidates {
        check_bandwidth(*bw)?;
    }
    let mut periods = points_by_period(events);
    periods.remove(&0);
    let quad = StripQuadrature::new(region, crate::model::Axis::X);
    let mut scores = Vec::with_capacity(candidates.len());
    for &bw in candidates {
        let masses: BTreeMap<usize, f64> = periods.iter().map(|(&t, p)| (t, kde_region_mass(p, bw, &quad))).collect();
        let (mut total, mut n) = (0.0, 0usize);
        for fold in folds {
            for &t in fold {
                let Some(held) = periods.get(&t) else { continue };
                let sources: Vec<usize> = periods
                    .keys()
                    .copied()
                    .filter(|&u| (u - 1) % week_len == (t - 1) % week_len && !fold.contains(&u))
                    .collect();
                if sources.is_empty() {
                    continue;
                }
                let mass = sources.iter().map(|u| masses[u]).sum::<f64>() / sources.len() as f64;
                for s in held {
                    let f = if region.contains(s) {
                        sources.iter().map(|u| kde_sum(s, &periods[u], bw)).sum::<f64>() / (sources.len() as f64 * mass)
                    } else {
                        0.0
                    };
                    total += f.ln();
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::Input("no held-out events with training history".into()));
        }
        scores.push(total / n as f64);
    }
    let mut best = 0;
    for (i, &sc) in scores.iter().enumerate().skip(1) {
        let (b, c) = (scores[best], candidates[i]);
        let wider = c[0] + c[1] < candidates[best][0] + candidates[best][1];
        if sc > b || (sc == b && wider) {
            best = i;
        }
    }
    Ok(CvResult { best: candidates[best], scores })
}
