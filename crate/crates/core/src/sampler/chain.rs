//! Initialization, the sweep, burn-in adaptation and draw collection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bdmcmc::BirthDeathConfig;
use super::gibbs::{update_beta, update_covariances, update_labels, update_means};
use super::metropolis::{mh_update_car_hyper, mh_update_weights, Acceptance, StepSizes};
use super::state::{ChainState, DensityCache, EventData, InitMethod, McmcConfig, PosteriorDraw};
use crate::error::{Error, Result};
use crate::model::{
    logit_transform, region_masses, Axis, Component, Event, MixtureState, SeasonalityConfig,
    SpatialPoint, StripQuadrature, StudyRegion, Sym2, WeightMatrix,
};
use crate::priors::sample::{sample_beta_prior, sample_car_column, sample_car_hyper_prior, sample_prior_component};
use crate::priors::{CarNeighborhood, CarState, Hyperparams};

/// Iterations between step-size adjustments during burn-in.
pub const ADAPT_WINDOW: usize = 50;

/// Seeded generator for chain `chain` of a run.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// CAR neighbourhood implied by a seasonality configuration (lags 1 and one day).
pub fn neighbourhood(season: &SeasonalityConfig) -> Result<CarNeighborhood> {
    CarNeighborhood::new(season.block, season.per_day)
}

/// Starting state with every parameter drawn from its prior.
pub fn initialize_from_prior<R: Rng + ?Sized>(
    k: usize,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    nb: &CarNeighborhood,
    n_events: usize,
    rng: &mut R,
) -> Result<ChainState> {
    let beta = sample_beta_prior(hp, rng)?;
    let components = (0..k).map(|_| sample_prior_component(hp, &beta, rng)).collect::<Result<Vec<_>>>()?;
    let blocks = season.block;
    let cols = k - 1;
    let (mut c, mut rho, mut nu2) = (Vec::new(), Vec::new(), Vec::new());
    let mut pi = vec![0.0; blocks * cols];
    for r in 0..cols {
        let (cr, rr, nr) = sample_car_hyper_prior(rng);
        let col = sample_car_column(cr, rr, nr, nb, rng)?;
        for (b, v) in col.into_iter().enumerate() {
            pi[b * cols + r] = v;
        }
        c.push(cr);
        rho.push(rr);
        nu2.push(nr);
    }
    let car = CarState::new(blocks, pi, c, rho, nu2)?;
    let mixture = MixtureState::new(components, WeightMatrix::from_raw(blocks, k, vec![1.0 / k as f64; blocks * k]), *season)?;
    let mut state = ChainState { labels: vec![0; n_events], mixture, car, beta };
    state.sync_weights();
    Ok(state)
}

/// k-means++ seeding followed by Lloyd iterations; returns labels.
fn kmeans<R: Rng + ?Sized>(points: &[SpatialPoint<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let d2 = |a: &SpatialPoint<f64>, b: &SpatialPoint<f64>| (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    let mut centers = vec![points[rng.random_range(0..n)]];
    let mut best: Vec<f64> = points.iter().map(|p| d2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            best.iter()
                .position(|&v| {
                    acc += v;
                    u < acc
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next]);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(d2(p, &points[next]));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let z = (0..k).min_by(|&a, &b| d2(p, &centers[a]).total_cmp(&d2(p, &centers[b]))).unwrap_or(0);
            changed |= z != labels[i];
            labels[i] = z;
        }
        let mut sums = vec![(0usize, 0.0, 0.0); k];
        for (i, p) in points.iter().enumerate() {
            sums[labels[i]].0 += 1;
            sums[labels[i]].1 += p.x;
            sums[labels[i]].2 += p.y;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.0 > 0 {
                *c = SpatialPoint::new(s.1 / s.0 as f64, s.2 / s.0 as f64);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Starting state built from a k-means partition of the events.
pub fn initialize_from_kmeans<R: Rng + ?Sized>(
    k: usize,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    data: &EventData,
    rng: &mut R,
) -> Result<ChainState> {
    if data.len() < k {
        return Err(Error::DegenerateData(format!("{} events cannot seed {k} clusters", data.len())));
    }
    let labels = kmeans(&data.points, k, rng);
    let beta = sample_beta_prior(hp, rng)?;
    let ridge = 1e-2;
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let pts: Vec<&SpatialPoint<f64>> = data.points.iter().zip(&labels).filter(|(_, &z)| z == j).map(|(p, _)| p).collect();
        let n = pts.len().max(1) as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let mut s = Sym2::diag(ridge, ridge);
        for p in &pts {
            s = s.add(&Sym2::outer([p.x - mx, p.y - my]).scale(1.0 / n));
        }
        let mu = if pts.is_empty() { hp.xi } else { SpatialPoint::new(mx, my) };
        components.push(Component::new(mu, s));
    }
    let blocks = season.block;
    let cols = k - 1;
    let mut pi = vec![0.0; blocks * cols];
    for b in 0..blocks {
        let mut counts = vec![1.0; k];
        for &i in &data.by_block[b] {
            counts[labels[i]] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let p: Vec<f64> = counts.iter().map(|v| v / total).collect();
        pi[b * cols..(b + 1) * cols].copy_from_slice(&logit_transform(&p)?);
    }
    let (mut c, mut rho, mut nu2) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..cols {
        let col: Vec<f64> = (0..blocks).map(|b| pi[b * cols + r]).collect();
        let mean = col.iter().sum::<f64>() / blocks as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / blocks as f64;
        c.push(mean);
        rho.push(0.1);
        nu2.push(var.max(0.05));
    }
    let car = CarState::new(blocks, pi, c, rho, nu2)?;
    let mixture = MixtureState::new(components, WeightMatrix::from_raw(blocks, k, vec![1.0 / k as f64; blocks * k]), *season)?;
    let mut state = ChainState { labels, mixture, car, beta };
    state.sync_weights();
    Ok(state)
}

/// One fixed-K chain: state, cached densities, step sizes and counters.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    pub(crate) data: &'a EventData,
    pub(crate) hp: Hyperparams,
    pub(crate) nb: CarNeighborhood,
    pub state: ChainState,
    pub(crate) cache: DensityCache,
    pub steps: StepSizes,
    window: Acceptance,
    pub acceptance: Acceptance,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a EventData, hp: Hyperparams, nb: CarNeighborhood, state: ChainState, steps: StepSizes) -> Result<Self> {
        let cache = DensityCache::new(&state.mixture.components, data)?;
        Ok(Self { data, hp, nb, state, cache, steps, window: Acceptance::default(), acceptance: Acceptance::default() })
    }

    pub fn cache(&self) -> &DensityCache {
        &self.cache
    }

    pub fn neighbourhood(&self) -> &CarNeighborhood {
        &self.nb
    }

    /// Labels, means, covariances, β, transformed weights, CAR hyperparameters.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let st = &mut self.state;
        update_labels(st, self.data, &self.cache, rng);
        update_means(st, self.data, &self.hp, rng)?;
        update_covariances(st, self.data, &self.hp, rng)?;
        update_beta(st, &self.hp, rng)?;
        self.cache.refresh(&st.mixture.components, self.data)?;
        let a = mh_update_weights(st, self.data, &self.cache, &self.nb, self.steps.pi, rng);
        let (c, r, n) = mh_update_car_hyper(&mut st.car, &self.nb, &self.steps, rng);
        let counts = Acceptance { pi: a, c, rho: r, nu: n };
        self.window.merge(&counts);
        self.acceptance.merge(&counts);
        Ok(())
    }

    /// Nudges each family's step toward 20–40% acceptance over the last window.
    pub fn adapt(&mut self) {
        fn tune(step: &mut f64, rate: f64) {
            if rate.is_nan() {
                return;
            }
            if rate < 0.2 {
                *step *= 0.8;
            } else if rate > 0.4 {
                *step *= 1.25;
            }
        }
        let [p, c, r, n] = self.window.rates();
        tune(&mut self.steps.pi, p);
        tune(&mut self.steps.c, c);
        tune(&mut self.steps.rho, r);
        tune(&mut self.steps.lognu, n);
        self.steps.rho = self.steps.rho.min(RHO_STEP_CAP);
        self.window = Acceptance::default();
    }

    pub fn check_finite(&self, iteration: usize) -> Result<()> {
        match self.state.non_finite() {
            Some(what) => Err(Error::NonFinite { iteration, what }),
            None => Ok(()),
        }
    }
}

// ρ lives in [0, 0.25); larger steps only waste proposals
const RHO_STEP_CAP: f64 = 0.1;

/// Stored draws and run statistics of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    /// Acceptance counts after burn-in.
    pub acceptance: Acceptance,
    /// Step sizes in force after burn-in.
    pub steps: StepSizes,
}

/// Snapshot of the state with its per-block region normalizers.
pub fn snapshot(state: &ChainState, iteration: usize, quad: &StripQuadrature, keep_labels: bool) -> Result<PosteriorDraw> {
    let masses = region_masses(&state.mixture.components, quad);
    // stored as is; a degenerate block is reported where the draw is used
    let w = &state.mixture.weights;
    let normalizers = (0..w.rows()).map(|b| w.row(b).iter().zip(&masses).map(|(p, m)| p * m).sum()).collect();
    Ok(PosteriorDraw {
        iteration,
        mixture: state.mixture.clone(),
        car: state.car.clone(),
        beta: state.beta,
        normalizers,
        labels: keep_labels.then(|| state.labels.clone()),
    })
}

pub(crate) fn validate_inputs(hp: &Hyperparams, season: &SeasonalityConfig, cfg: &McmcConfig) -> Result<()> {
    cfg.validate()?;
    hp.validate()?;
    season.validate()
}

/// Fixed-K posterior sampler; deterministic given `cfg.seed` and `chain`.
pub fn run_chain_indexed(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    chain: u64,
) -> Result<ChainOutput> {
    run(events, region, hp, season, cfg, None, chain)
}

/// Variable-K sampler: a birth-death stage before every sweep, starting from
/// `cfg.components` components.
pub fn run_bd_chain_indexed(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    bd: &BirthDeathConfig,
    chain: u64,
) -> Result<ChainOutput> {
    bd.validate()?;
    if cfg.components > bd.k_max {
        return Err(Error::Config(format!("{} starting components exceed k_max {}", cfg.components, bd.k_max)));
    }
    run(events, region, hp, season, cfg, Some(bd), chain)
}

/// [`run_bd_chain_indexed`] for chain 0.
pub fn run_bd_chain(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    bd: &BirthDeathConfig,
) -> Result<ChainOutput> {
    run_bd_chain_indexed(events, region, hp, season, cfg, bd, 0)
}

fn run(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    bd: Option<&BirthDeathConfig>,
    chain: u64,
) -> Result<ChainOutput> {
    validate_inputs(hp, season, cfg)?;
    let data = EventData::new(events, season)?;
    let nb = neighbourhood(season)?;
    let quad = StripQuadrature::new(region, Axis::X);
    let mut rng = chain_rng(cfg.seed, chain);
    let state = match cfg.init {
        InitMethod::Prior => initialize_from_prior(cfg.components, hp, season, &nb, data.len(), &mut rng)?,
        InitMethod::KMeans => initialize_from_kmeans(cfg.components, hp, season, &data, &mut rng)?,
    };
    let mut sampler = Sampler::new(&data, *hp, nb, state, StepSizes::from_config(cfg))?;
    let mut draws = Vec::with_capacity((cfg.n_iter - cfg.burn_in) / cfg.thin + 1);
    for it in 1..=cfg.n_iter {
        if let Some(bd) = bd {
            sampler.birth_death(bd, &mut rng)?;
        }
        sampler.sweep(&mut rng)?;
        sampler.check_finite(it)?;
        if it <= cfg.burn_in {
            if cfg.adapt && it % ADAPT_WINDOW == 0 {
                sampler.adapt();
            }
            if it == cfg.burn_in {
                sampler.acceptance = Acceptance::default();
            }
        } else if (it - cfg.burn_in) % cfg.thin == 0 {
            draws.push(snapshot(&sampler.state, it, &quad, cfg.store_labels)?);
        }
    }
    Ok(ChainOutput { draws, acceptance: sampler.acceptance, steps: sampler.steps })
}

/// [`run_chain_indexed`] for chain 0.
pub fn run_chain(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
) -> Result<ChainOutput> {
    run_chain_indexed(events, region, hp, season, cfg, 0)
}

/// Independent chains `0..n` in parallel, sharing the seed on distinct streams.
pub fn run_chains(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    n: usize,
) -> Result<Vec<ChainOutput>> {
    (0..n as u64).into_par_iter().map(|c| run_chain_indexed(events, region, hp, season, cfg, c)).collect()
}

/// Independent variable-K chains `0..n` in parallel.
pub fn run_bd_chains(
    events: &[Event],
    region: &StudyRegion<f64>,
    hp: &Hyperparams,
    season: &SeasonalityConfig,
    cfg: &McmcConfig,
    bd: &BirthDeathConfig,
    n: usize,
) -> Result<Vec<ChainOutput>> {
    (0..n as u64).into_par_iter().map(|c| run_bd_chain_indexed(events, region, hp, season, cfg, bd, c)).collect()
}
