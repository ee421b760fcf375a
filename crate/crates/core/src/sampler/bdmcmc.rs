//! Variable-K sampling: a continuous-time birth-death stage over the number of
//! components before each fixed-K sweep.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use super::chain::Sampler;
use super::state::{ChainState, DensityCache, EventData};
use crate::error::{Error, Result};
use crate::model::WeightMatrix;
use crate::priors::sample::{sample_car_hyper_prior, sample_prior_component};
use crate::priors::{CarState, Hyperparams};

/// Prior on K and the birth-death process settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathConfig {
    /// Rate of the truncated Poisson prior on K.
    pub tau: f64,
    pub k_max: usize,
    /// Births per unit virtual time.
    pub birth_rate: f64,
    /// Virtual time simulated per iteration.
    pub stage_duration: f64,
}

impl BirthDeathConfig {
    /// `k_max = 50`, `birth_rate = tau`, one unit of virtual time per iteration.
    pub fn new(tau: f64) -> Self {
        Self { tau, k_max: 50, birth_rate: tau, stage_duration: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(self.birth_rate >= 0.0) || !self.birth_rate.is_finite() {
            return Err(Error::Config(format!("birth_rate must be nonnegative, got {}", self.birth_rate)));
        }
        if !(self.stage_duration >= 0.0) || !self.stage_duration.is_finite() {
            return Err(Error::Config(format!("stage_duration must be nonnegative, got {}", self.stage_duration)));
        }
        Ok(())
    }
}

/// `log P(K = k)` for `P(K) ∝ τ^K / K!` on `1..=k_max`.
pub fn truncated_poisson_logpmf(k: usize, cfg: &BirthDeathConfig) -> Result<f64> {
    if k == 0 || k > cfg.k_max {
        return Err(Error::Input(format!("K = {k} outside 1..={}", cfg.k_max)));
    }
    let lt = cfg.tau.ln();
    let terms: Vec<f64> = (1..=cfg.k_max).map(|i| i as f64 * lt - ln_factorial(i as u64)).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok(terms[k - 1] - log_norm)
}

/// `log L(without j) − log L` for every component, the removed component's
/// weight redistributed proportionally in each block.
pub fn removal_log_ratios(state: &ChainState, data: &EventData, cache: &DensityCache) -> Vec<f64> {
    let k = state.k();
    let mut total = vec![0.0; k];
    let mut prod = vec![1.0; k];
    let w = &state.mixture.weights;
    for (i, &b) in data.block.iter().enumerate() {
        let p = w.row(b);
        let sc = cache.scaled(i);
        let s: f64 = p.iter().zip(sc).map(|(a, e)| a * e).sum();
        for j in 0..k {
            let rest = s - p[j] * sc[j];
            let rest = if rest < 1e-6 * s {
                (0..k).filter(|&l| l != j).map(|l| p[l] * sc[l]).sum()
            } else {
                rest
            };
            prod[j] *= rest / ((1.0 - p[j]) * s);
            if !(1e-200..=1e200).contains(&prod[j]) {
                total[j] += prod[j].ln();
                prod[j] = 1.0;
            }
        }
    }
    total.iter().zip(&prod).map(|(t, p)| t + p.ln()).collect()
}

/// Death rate of every component; all zero when `K = 1`.
pub fn death_rates(state: &ChainState, data: &EventData, cache: &DensityCache, cfg: &BirthDeathConfig) -> Result<Vec<f64>> {
    let k = state.k();
    if k < 2 || cfg.birth_rate == 0.0 {
        return Ok(vec![0.0; k]);
    }
    let prior = truncated_poisson_logpmf(k - 1, cfg)? - truncated_poisson_logpmf(k, cfg)? - (k as f64).ln();
    Ok(removal_log_ratios(state, data, cache).into_iter().map(|l| cfg.birth_rate * (l + prior).exp()).collect())
}

/// Rate at which component `j` dies.
pub fn death_rate(j: usize, state: &ChainState, data: &EventData, cache: &DensityCache, cfg: &BirthDeathConfig) -> Result<f64> {
    if j >= state.k() {
        return Err(Error::Input(format!("component {} of {}", j + 1, state.k())));
    }
    Ok(death_rates(state, data, cache, cfg)?[j])
}

/// CAR hyperparameters kept per non-reference component during a stage.
struct Columns {
    c: Vec<f64>,
    rho: Vec<f64>,
    nu2: Vec<f64>,
}

/// Births and deaths during one stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEvents {
    pub births: u64,
    pub deaths: u64,
}

/// Simulates the birth-death process for `cfg.stage_duration` of virtual
/// time. Newborns take prior parameters, a weight `w ~ Beta(1, K)` shared
/// across blocks, and sit just before the reference component; the transformed
/// weights are rebuilt from the weight rows when K changed.
pub fn run_bd_stage<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &EventData,
    cache: &mut DensityCache,
    hp: &Hyperparams,
    cfg: &BirthDeathConfig,
    rng: &mut R,
) -> Result<StageEvents> {
    let mut ev = StageEvents::default();
    if cfg.stage_duration == 0.0 {
        return Ok(ev);
    }
    let mut cols = Columns { c: state.car.c.clone(), rho: state.car.rho.clone(), nu2: state.car.nu2.clone() };
    let mut clock = 0.0;
    loop {
        let k = state.k();
        let birth = if k < cfg.k_max { cfg.birth_rate } else { 0.0 };
        let deaths = death_rates(state, data, cache, cfg)?;
        let total = birth + deaths.iter().sum::<f64>();
        if !(total > 0.0) {
            break;
        }
        clock += rng.sample::<f64, _>(Exp1) / total;
        if clock > cfg.stage_duration {
            break;
        }
        let u = rng.random::<f64>() * total;
        if u < birth {
            give_birth(state, data, cache, &mut cols, hp, rng)?;
            ev.births += 1;
        } else {
            let mut acc = birth;
            let j = deaths
                .iter()
                .position(|&d| {
                    acc += d;
                    u < acc
                })
                .unwrap_or_else(|| deaths.iter().rposition(|&d| d > 0.0).unwrap_or(k - 1));
            kill(state, cache, &mut cols, j);
            ev.deaths += 1;
        }
    }
    if ev.births + ev.deaths > 0 {
        rebuild_transformed(state, cols)?;
    }
    Ok(ev)
}

fn give_birth<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &EventData,
    cache: &mut DensityCache,
    cols: &mut Columns,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let k = state.k();
    // Beta(1, K) by inversion
    let w = 1.0 - (1.0 - rng.random::<f64>()).powf(1.0 / k as f64);
    let comp = sample_prior_component(hp, &state.beta, rng)?;
    let (c, rho, nu2) = sample_car_hyper_prior(rng);
    let at = k - 1;
    let old = &state.mixture.weights;
    let mut rows = Vec::with_capacity(old.rows() * (k + 1));
    for b in 0..old.rows() {
        let row = old.row(b);
        rows.extend(row[..at].iter().map(|p| p * (1.0 - w)));
        rows.push(w);
        rows.extend(row[at..].iter().map(|p| p * (1.0 - w)));
    }
    state.mixture.weights = WeightMatrix::from_raw(old.rows(), k + 1, rows);
    state.mixture.components.insert(at, comp);
    cache.insert_component(at, &state.mixture.components[at], data)?;
    cols.c.push(c);
    cols.rho.push(rho);
    cols.nu2.push(nu2);
    for z in state.labels.iter_mut().filter(|z| **z >= at) {
        *z += 1;
    }
    Ok(())
}

fn kill(state: &mut ChainState, cache: &mut DensityCache, cols: &mut Columns, j: usize) {
    let k = state.k();
    let old = &state.mixture.weights;
    let mut rows = Vec::with_capacity(old.rows() * (k - 1));
    for b in 0..old.rows() {
        let row = old.row(b);
        let rest: f64 = row.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, p)| p).sum();
        rows.extend(row.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, p)| p / rest));
    }
    state.mixture.weights = WeightMatrix::from_raw(old.rows(), k - 1, rows);
    state.mixture.components.remove(j);
    cache.remove_component(j);
    // a dying reference hands its role to the last survivor, whose column goes
    let col = j.min(k - 2);
    cols.c.remove(col);
    cols.rho.remove(col);
    cols.nu2.remove(col);
    for z in state.labels.iter_mut() {
        if *z > j || (*z == j && j == k - 1) {
            *z -= 1;
        }
    }
}

fn rebuild_transformed(state: &mut ChainState, cols: Columns) -> Result<()> {
    let w = &state.mixture.weights;
    let (blocks, k) = (w.rows(), w.cols());
    let mut pi = Vec::with_capacity(blocks * (k - 1));
    for b in 0..blocks {
        let row = w.row(b);
        let reference = row[k - 1].max(f64::MIN_POSITIVE).ln();
        pi.extend(row[..k - 1].iter().map(|p| p.max(f64::MIN_POSITIVE).ln() - reference));
    }
    state.car = CarState::new(blocks, pi, cols.c, cols.rho, cols.nu2)?;
    state.sync_weights();
    Ok(())
}

impl Sampler<'_> {
    /// One birth-death stage on the sampler's state and cache.
    pub fn birth_death<R: Rng + ?Sized>(&mut self, cfg: &BirthDeathConfig, rng: &mut R) -> Result<StageEvents> {
        run_bd_stage(&mut self.state, self.data, &mut self.cache, &self.hp, cfg, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, Event, MixtureState, SeasonalityConfig, SpatialPoint, Sym2};
    use crate::sampler::chain_rng;

    fn cfg(tau: f64, k_max: usize) -> BirthDeathConfig {
        BirthDeathConfig { k_max, ..BirthDeathConfig::new(tau) }
    }

    #[test]
    fn pmf_examples() {
        assert!(truncated_poisson_logpmf(1, &cfg(3.0, 1)).unwrap().abs() < 1e-15);
        let c = cfg(1.0, 2);
        assert!((truncated_poisson_logpmf(1, &c).unwrap().exp() - 2.0 / 3.0).abs() < 1e-15);
        assert!((truncated_poisson_logpmf(2, &c).unwrap().exp() - 1.0 / 3.0).abs() < 1e-15);
        for tau in [0.1, 2.5, 19.0, 80.0] {
            let c = cfg(tau, 50);
            let s: f64 = (1..=50).map(|k| truncated_poisson_logpmf(k, &c).unwrap().exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(truncated_poisson_logpmf(0, &c).is_err());
        assert!(truncated_poisson_logpmf(3, &c).is_err());
    }

    fn state(k: usize, n: usize, season: &SeasonalityConfig) -> ChainState {
        let components = (0..k).map(|j| Component::new(SpatialPoint::new(j as f64 * 3.0, 0.0), Sym2::identity())).collect();
        let w = WeightMatrix::repeated(season.block, &vec![1.0 / k as f64; k]).unwrap();
        let mixture = MixtureState::new(components, w, *season).unwrap();
        let car = CarState::new(season.block, vec![0.0; season.block * (k - 1)], vec![0.0; k - 1], vec![0.1; k - 1], vec![1.0; k - 1])
            .unwrap();
        let mut s = ChainState { labels: vec![0; n], mixture, car, beta: Sym2::identity() };
        s.sync_weights();
        s
    }

    #[test]
    fn empty_data_rates_are_prior_ratio() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let data = EventData::new(&[], &season).unwrap();
        let st = state(4, 0, &season);
        let cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let c = cfg(3.0, 10);
        let want = 3.0 * (truncated_poisson_logpmf(3, &c).unwrap() - truncated_poisson_logpmf(4, &c).unwrap()).exp() / 4.0;
        for r in death_rates(&st, &data, &cache, &c).unwrap() {
            assert!((r - want).abs() < 1e-14);
        }
        // equals birth_rate / tau here
        assert!((want - 1.0).abs() < 1e-12);
        assert_eq!(death_rates(&state(1, 0, &season), &data, &DensityCache::default(), &c).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_weight_component_has_unit_likelihood_ratio() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let events: Vec<Event> = (0..50).map(|i| Event::new(i % 20 + 1, (i % 7) as f64, (i % 5) as f64)).collect();
        let data = EventData::new(&events, &season).unwrap();
        let mut st = state(3, 50, &season);
        st.mixture.weights = WeightMatrix::repeated(10, &[0.6, 0.0, 0.4]).unwrap();
        let cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let l = removal_log_ratios(&st, &data, &cache);
        assert!(l[1].abs() < 1e-14);
        let before: Vec<f64> = events.iter().map(|e| st.mixture.evaluator().unwrap().density(&e.location, e.t).unwrap()).collect();
        let mut cols = Columns { c: vec![0.0; 2], rho: vec![0.1; 2], nu2: vec![1.0; 2] };
        let mut cache = cache;
        kill(&mut st, &mut cache, &mut cols, 1);
        for (e, d) in events.iter().zip(before) {
            assert_eq!(st.mixture.evaluator().unwrap().density(&e.location, e.t).unwrap(), d);
        }
    }

    #[test]
    fn isolated_cluster_owner_rarely_dies() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let mut rng = chain_rng(3, 0);
        let events: Vec<Event> = (0..200)
            .map(|i| {
                let x = if i % 2 == 0 { 0.0 } else { 30.0 };
                Event::new(i % 20 + 1, x + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
            })
            .collect();
        let data = EventData::new(&events, &season).unwrap();
        let mut st = state(2, 200, &season);
        st.mixture.components[1].mu = SpatialPoint::new(30.0, 0.0);
        let cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let c = cfg(3.0, 10);
        for r in death_rates(&st, &data, &cache, &c).unwrap() {
            assert!(r < 1e-6 * c.birth_rate);
        }
    }

    #[test]
    fn birth_then_death_restores_rows() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let events: Vec<Event> = (0..30).map(|i| Event::new(i % 20 + 1, (i % 7) as f64, (i % 5) as f64)).collect();
        let data = EventData::new(&events, &season).unwrap();
        let mut rng = chain_rng(4, 0);
        let mut st = state(3, 30, &season);
        st.mixture.weights = WeightMatrix::repeated(10, &[0.5, 0.2, 0.3]).unwrap();
        let before = st.mixture.weights.clone();
        let mut cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let hp = Hyperparams::from_ranges(SpatialPoint::new(3.0, 2.0), [6.0, 4.0]).unwrap();
        let mut cols = Columns { c: vec![0.0; 2], rho: vec![0.1; 2], nu2: vec![1.0; 2] };
        give_birth(&mut st, &data, &mut cache, &mut cols, &hp, &mut rng).unwrap();
        assert_eq!(st.k(), 4);
        for b in 0..10 {
            assert!((st.mixture.weights.row(b).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let fresh = DensityCache::new(&st.mixture.components, &data).unwrap();
        assert_eq!(fresh.scaled(7), cache.scaled(7));
        kill(&mut st, &mut cache, &mut cols, 2);
        for b in 0..10 {
            for (x, y) in st.mixture.weights.row(b).iter().zip(before.row(b)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(cols.c.len(), 2);
    }

    #[test]
    fn dying_reference_passes_role_on() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let data = EventData::new(&[Event::new(1, 0.0, 0.0)], &season).unwrap();
        let mut st = state(3, 1, &season);
        st.labels[0] = 2;
        let mut cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let mut cols = Columns { c: vec![1.0, 2.0], rho: vec![0.1; 2], nu2: vec![1.0; 2] };
        kill(&mut st, &mut cache, &mut cols, 2);
        assert_eq!(cols.c, vec![1.0]);
        assert_eq!(st.labels[0], 1);
        rebuild_transformed(&mut st, cols).unwrap();
        assert_eq!(st.car.cols, 1);
        assert!(st.car.pi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_duration_or_rate_is_a_no_op() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let data = EventData::new(&[], &season).unwrap();
        let hp = Hyperparams::from_ranges(SpatialPoint::new(0.0, 0.0), [5.0, 5.0]).unwrap();
        let st0 = state(3, 0, &season);
        for c in [BirthDeathConfig { stage_duration: 0.0, ..cfg(3.0, 10) }, BirthDeathConfig { birth_rate: 0.0, ..cfg(3.0, 10) }] {
            let mut st = st0.clone();
            let mut cache = DensityCache::new(&st.mixture.components, &data).unwrap();
            let mut rng = chain_rng(1, 0);
            let ev = run_bd_stage(&mut st, &data, &mut cache, &hp, &c, &mut rng).unwrap();
            assert_eq!(ev, StageEvents::default());
            assert_eq!(st, st0);
            assert_eq!(rng.random::<u64>(), chain_rng(1, 0).random::<u64>());
        }
    }

    #[test]
    fn k_stays_in_bounds() {
        let season = SeasonalityConfig::new(20, 10, 2).unwrap();
        let data = EventData::new(&[], &season).unwrap();
        let hp = Hyperparams::from_ranges(SpatialPoint::new(0.0, 0.0), [5.0, 5.0]).unwrap();
        let mut st = state(2, 0, &season);
        let mut cache = DensityCache::new(&st.mixture.components, &data).unwrap();
        let c = BirthDeathConfig { stage_duration: 5.0, ..cfg(3.0, 4) };
        let mut rng = chain_rng(2, 0);
        for _ in 0..200 {
            run_bd_stage(&mut st, &data, &mut cache, &hp, &c, &mut rng).unwrap();
            assert!((1..=4).contains(&st.k()));
            assert_eq!(st.car.cols, st.k() - 1);
            assert!(st.car.pi.iter().all(|v| v.is_finite()));
            for b in 0..10 {
                assert!((st.mixture.weights.row(b).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
