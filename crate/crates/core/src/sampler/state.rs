use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inverse_logit, Component, Event, MixtureState, SeasonalityConfig, SpatialPoint, Sym2, WeightMatrix};
use crate::priors::CarState;

/// Events laid out for the sweeps: coordinates, 0-based block of each event,
/// and event indices grouped by block.
#[derive(Clone, Debug)]
pub struct EventData {
    pub points: Vec<SpatialPoint<f64>>,
    pub block: Vec<usize>,
    pub by_block: Vec<Vec<usize>>,
}

impl EventData {
    pub fn new(events: &[Event], season: &SeasonalityConfig) -> Result<Self> {
        let mut points = Vec::with_capacity(events.len());
        let mut block = Vec::with_capacity(events.len());
        let mut by_block = vec![Vec::new(); season.block];
        for (i, e) in events.iter().enumerate() {
            let b = season.block_of(e.t)? - 1;
            if !e.location.is_finite() {
                return Err(Error::Input(format!("event {i} has a non-finite location")));
            }
            points.push(e.location);
            block.push(b);
            by_block[b].push(i);
        }
        Ok(Self { points, block, by_block })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-event component log densities, plus densities rescaled by each
/// event's largest component so that mixture sums never underflow.
#[derive(Clone, Debug, Default)]
pub struct DensityCache {
    k: usize,
    log_phi: Vec<f64>,
    scaled: Vec<f64>,
}

impl DensityCache {
    pub fn new(components: &[Component<f64>], data: &EventData) -> Result<Self> {
        let mut c = Self::default();
        c.refresh(components, data)?;
        Ok(c)
    }

    pub fn refresh(&mut self, components: &[Component<f64>], data: &EventData) -> Result<()> {
        let kernels = components.iter().map(|c| c.kernel()).collect::<Result<Vec<_>>>()?;
        let k = kernels.len();
        self.k = k;
        self.log_phi.clear();
        self.log_phi.reserve(data.len() * k);
        for s in &data.points {
            self.log_phi.extend(kernels.iter().map(|kr| kr.log_pdf(s)));
        }
        self.rescale();
        Ok(())
    }

    fn rescale(&mut self) {
        let k = self.k;
        self.scaled.resize(self.log_phi.len(), 0.0);
        if k == 0 {
            return;
        }
        for (lp, sc) in self.log_phi.chunks_exact(k).zip(self.scaled.chunks_exact_mut(k)) {
            let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (o, &v) in sc.iter_mut().zip(lp) {
                *o = (v - m).exp();
            }
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `log φ(s_i; μ_j, Σ_j)` for every component `j`.
    #[inline]
    pub fn log_phi(&self, i: usize) -> &[f64] {
        &self.log_phi[i * self.k..(i + 1) * self.k]
    }

    /// `φ_j(s_i) / max_l φ_l(s_i)`.
    #[inline]
    pub fn scaled(&self, i: usize) -> &[f64] {
        &self.scaled[i * self.k..(i + 1) * self.k]
    }

    /// Adds a component column at position `at`.
    pub fn insert_component(&mut self, at: usize, c: &Component<f64>, data: &EventData) -> Result<()> {
        let kr = c.kernel()?;
        let k = self.k;
        let mut out = Vec::with_capacity(data.len() * (k + 1));
        for (i, s) in data.points.iter().enumerate() {
            let row = &self.log_phi[i * k..(i + 1) * k];
            out.extend_from_slice(&row[..at]);
            out.push(kr.log_pdf(s));
            out.extend_from_slice(&row[at..]);
        }
        self.log_phi = out;
        self.k = k + 1;
        self.rescale();
        Ok(())
    }

    pub fn remove_component(&mut self, j: usize) {
        let k = self.k;
        let mut out = Vec::with_capacity(self.log_phi.len() - self.log_phi.len() / k.max(1));
        for row in self.log_phi.chunks_exact(k) {
            out.extend(row.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, &v)| v));
        }
        self.log_phi = out;
        self.k = k - 1;
        self.rescale();
    }
}

/// Log of `Σ_j p_j φ_j(s_i)` minus the event's scaling constant.
#[inline]
pub(crate) fn scaled_mixture_log(weights: &[f64], scaled: &[f64], log_phi: &[f64]) -> f64 {
    let s: f64 = weights.iter().zip(scaled).map(|(p, e)| p * e).sum();
    if s > 1e-280 {
        return s.ln();
    }
    // deep underflow: redo in log space relative to the same maximum
    let m = log_phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = weights.iter().zip(log_phi).map(|(p, l)| p.ln() + l - m).collect();
    let tm = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if tm == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    tm + terms.iter().map(|t| (t - tm).exp()).sum::<f64>().ln()
}

/// Current values of every parameter of the fixed-K chain.
///
/// Labels are 0-based component indices. `mixture.weights` always equals the
/// row-wise inverse logit of `car.pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub labels: Vec<usize>,
    pub mixture: MixtureState<f64>,
    pub car: CarState,
    pub beta: Sym2<f64>,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.mixture.k()
    }

    /// Recomputes every weight row from the transformed weights.
    pub fn sync_weights(&mut self) {
        let blocks = self.car.blocks;
        let k = self.k();
        let mut data = Vec::with_capacity(blocks * k);
        for b in 0..blocks {
            data.extend(inverse_logit(self.car.pi_row(b)));
        }
        self.mixture.weights = WeightMatrix::from_raw(blocks, k, data);
    }

    /// `n_{b,j}` label counts, block-major.
    pub fn label_counts(&self, data: &EventData) -> Vec<usize> {
        let k = self.k();
        let mut counts = vec![0usize; self.car.blocks * k];
        for (i, &z) in self.labels.iter().enumerate() {
            counts[data.block[i] * k + z] += 1;
        }
        counts
    }

    /// First non-finite parameter, if any.
    pub fn non_finite(&self) -> Option<String> {
        for (j, c) in self.mixture.components.iter().enumerate() {
            if !c.mu.is_finite() {
                return Some(format!("mean of component {}", j + 1));
            }
            let s = &c.sigma;
            if !(s.xx.is_finite() && s.xy.is_finite() && s.yy.is_finite()) || !s.is_positive_definite() {
                return Some(format!("covariance of component {}", j + 1));
            }
        }
        if !self.beta.is_positive_definite() {
            return Some("beta".into());
        }
        if let Some(i) = self.car.pi.iter().position(|v| !v.is_finite()) {
            return Some(format!("transformed weight (block {}, column {})", i / self.car.cols + 1, i % self.car.cols + 1));
        }
        for r in 0..self.car.cols {
            if !(self.car.c[r].is_finite() && self.car.rho[r].is_finite() && self.car.nu2[r].is_finite()) {
                return Some(format!("CAR hyperparameters of column {}", r + 1));
            }
        }
        None
    }
}

/// How the chain's starting point is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// Every parameter drawn from its prior.
    #[default]
    Prior,
    /// Labels from k-means; component and weight parameters from the clusters.
    KMeans,
}

/// Run-length, thinning and random-walk settings for one chain.
///
/// `rw_step_pi` and `rw_step_c` multiply an approximate conditional standard
/// deviation of the coordinate being moved; `rw_step_rho` and
/// `rw_step_lognu` are absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub components: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub rw_step_pi: f64,
    pub rw_step_c: f64,
    pub rw_step_rho: f64,
    pub rw_step_lognu: f64,
    pub adapt: bool,
    pub seed: u64,
    pub init: InitMethod,
    pub store_labels: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            components: 3,
            n_iter: 50_000,
            burn_in: 25_000,
            thin: 1,
            rw_step_pi: 2.0,
            rw_step_c: 2.0,
            rw_step_rho: 0.01,
            rw_step_lognu: 0.2,
            adapt: true,
            seed: 1,
            init: InitMethod::Prior,
            store_labels: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("need at least one component".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!("burn_in {} must be below n_iter {}", self.burn_in, self.n_iter)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be positive".into()));
        }
        for (name, v) in [
            ("rw_step_pi", self.rw_step_pi),
            ("rw_step_c", self.rw_step_c),
            ("rw_step_rho", self.rw_step_rho),
            ("rw_step_lognu", self.rw_step_lognu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One stored posterior sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub iteration: usize,
    pub mixture: MixtureState<f64>,
    pub car: CarState,
    pub beta: Sym2<f64>,
    /// Per-block mass of the mixture inside the study region.
    pub normalizers: Vec<f64>,
    pub labels: Option<Vec<usize>>,
}

impl PosteriorDraw {
    pub fn k(&self) -> usize {
        self.mixture.k()
    }
}
