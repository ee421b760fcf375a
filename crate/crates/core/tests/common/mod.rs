#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stmix::model::{Component, Event, MixtureState, SeasonalityConfig, SpatialPoint, Sym2, WeightMatrix};
use stmix::priors::CarState;
use stmix::sampler::ChainState;
use stmix::synthesis::{simulate, ComponentSpec, Scenario, ScenarioSpec};

pub const TRAIN_PERIODS: usize = 336;

/// Three well-separated components, ρ = 0.2, 45 events per period, four
/// training weeks followed by four test weeks.
pub fn reference_spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        components: vec![
            ComponentSpec { mu: [2.0, 2.0], sigma: [0.8, 0.15, 0.6] },
            ComponentSpec { mu: [6.5, 3.0], sigma: [0.7, -0.2, 0.9] },
            ComponentSpec { mu: [3.5, 7.0], sigma: [1.0, 0.3, 0.7] },
        ],
        c: vec![0.3, -0.2],
        rho: vec![0.2, 0.2],
        nu2: vec![0.5, 0.5],
        delta: 45.0,
        season: SeasonalityConfig::new(2 * TRAIN_PERIODS, 84, 12).unwrap(),
        region: vec![[-1.5, -1.5], [10.0, -1.5], [10.0, 10.5], [-1.5, 10.5]],
        grid_resolution: 0.5,
        seed,
        truncate: true,
    }
}

pub fn truth_means() -> Vec<SpatialPoint<f64>> {
    reference_spec(0).components.iter().map(|c| SpatialPoint::new(c.mu[0], c.mu[1])).collect()
}

/// Scenario plus its training and test events.
pub fn reference_data(seed: u64) -> (Scenario, Vec<Event>, Vec<Event>) {
    let s = reference_spec(seed).build().unwrap();
    let events = simulate(&s).unwrap();
    let (train, test) = events.into_iter().partition(|e| e.t <= TRAIN_PERIODS);
    (s, train, test)
}

pub fn train_season() -> SeasonalityConfig {
    SeasonalityConfig::new(TRAIN_PERIODS, 84, 12).unwrap()
}

/// Standard error of the mean from `⌊√n⌋` non-overlapping batches.
pub fn batch_se(x: &[f64]) -> f64 {
    let nb = (x.len() as f64).sqrt().floor() as usize;
    let len = x.len() / nb;
    let means: Vec<f64> = (0..nb).map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let m = means.iter().sum::<f64>() / nb as f64;
    let v = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (v / nb as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Textbook bivariate normal log density from an explicit covariance.
pub fn oracle_normal_log(s: [f64; 2], mu: [f64; 2], cov: [f64; 3]) -> f64 {
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    let (dx, dy) = (s[0] - mu[0], s[1] - mu[1]);
    let q = (cov[2] * dx * dx - 2.0 * cov[1] * dx * dy + cov[0] * dy * dy) / det;
    -0.5 * q - (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln()
}

/// Textbook 2×2 Wishart log density, `E[W] = n V`.
pub fn oracle_wishart_log(w: [f64; 3], n: f64, v: [f64; 3]) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let det_w = w[0] * w[2] - w[1] * w[1];
    let det_v = v[0] * v[2] - v[1] * v[1];
    // tr(V⁻¹ W)
    let tr = (v[2] * w[0] - 2.0 * v[1] * w[1] + v[0] * w[2]) / det_v;
    let lg = 0.5 * std::f64::consts::PI.ln() + ln_gamma(n / 2.0) + ln_gamma((n - 1.0) / 2.0);
    (n - 3.0) / 2.0 * det_w.ln() - tr / 2.0 - n * 2f64.ln() - n / 2.0 * det_v.ln() - lg
}

pub fn random_spd(rng: &mut ChaCha8Rng) -> Sym2<f64> {
    let a: f64 = rng.random_range(0.3..1.5);
    let d: f64 = rng.random_range(0.3..1.5);
    let r: f64 = rng.random_range(-0.6..0.6);
    Sym2::new(a, r * (a * d).sqrt(), d)
}

pub fn random_events(rng: &mut ChaCha8Rng, n: usize, season: &SeasonalityConfig) -> Vec<Event> {
    (0..n)
        .map(|_| Event::new(rng.random_range(1..=season.periods), rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)))
        .collect()
}

/// Random valid state with `k` components over `season`.
pub fn random_state(rng: &mut ChaCha8Rng, k: usize, season: &SeasonalityConfig, n_events: usize) -> ChainState {
    let components = (0..k)
        .map(|_| Component::new(SpatialPoint::new(rng.random_range(1.0..7.0), rng.random_range(1.0..7.0)), random_spd(rng)))
        .collect();
    let cols = k - 1;
    let blocks = season.block;
    let pi = (0..blocks * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
    let car = CarState::new(
        blocks,
        pi,
        (0..cols).map(|_| rng.random_range(-0.5..0.5)).collect(),
        (0..cols).map(|_| rng.random_range(0.0..0.24)).collect(),
        (0..cols).map(|_| rng.random_range(0.2..2.0)).collect(),
    )
    .unwrap();
    let mixture = MixtureState::new(components, WeightMatrix::repeated(blocks, &vec![1.0 / k as f64; k]).unwrap(), *season).unwrap();
    let mut st = ChainState {
        labels: (0..n_events).map(|_| rng.random_range(0..k)).collect(),
        mixture,
        car,
        beta: random_spd(rng),
    };
    st.sync_weights();
    st
}
