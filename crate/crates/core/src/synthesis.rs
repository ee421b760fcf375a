//! Synthetic point-process data from a known mixture.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Component, Event, MixtureState, SeasonalityConfig, SpatialPoint, StudyRegion, Sym2, WeightMatrix};
use crate::model::inverse_logit;
use crate::priors::sample::{sample_car_column, sample_mvn2};
use crate::priors::{CarNeighborhood, CarState};
use crate::sampler::chain_rng;

/// Generating model and design of a synthetic data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub truth: MixtureState<f64>,
    pub car: CarState,
    /// Expected count `δ_t` of every period `t = 1..=T`.
    pub delta: Vec<f64>,
    pub region: StudyRegion<f64>,
    pub seed: u64,
    /// Reject locations outside the region.
    pub truncate: bool,
}

impl Scenario {
    /// Weights from the transformed weights in `car`.
    pub fn new(
        components: Vec<Component<f64>>,
        car: CarState,
        season: SeasonalityConfig,
        delta: Vec<f64>,
        region: StudyRegion<f64>,
        seed: u64,
    ) -> Result<Self> {
        car.validate()?;
        if car.cols + 1 != components.len() || car.blocks != season.block {
            return Err(Error::Input("CAR state does not match the components and block length".into()));
        }
        let mut data = Vec::with_capacity(car.blocks * components.len());
        for b in 0..car.blocks {
            data.extend(inverse_logit(car.pi_row(b)));
        }
        let weights = WeightMatrix::new(car.blocks, components.len(), data)?;
        let truth = MixtureState::new(components, weights, season)?;
        let s = Self { truth, car, delta, region, seed, truncate: false };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta.len() != self.truth.season.periods {
            return Err(Error::Input(format!(
                "{} expected counts for {} periods",
                self.delta.len(),
                self.truth.season.periods
            )));
        }
        if self.delta.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::Input("expected counts must be finite and nonnegative".into()));
        }
        self.truth.kernels()?;
        Ok(())
    }
}

/// Exact draw of the `B × (K−1)` transformed weights (block-major) from independent CAR columns.
pub fn sample_car_weights<R: Rng + ?Sized>(
    c: &[f64],
    rho: &[f64],
    nu2: &[f64],
    nb: &CarNeighborhood,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cols = c.len();
    if rho.len() != cols || nu2.len() != cols {
        return Err(Error::Input("CAR parameter vectors differ in length".into()));
    }
    let blocks = nb.block();
    let mut pi = vec![0.0; blocks * cols];
    for r in 0..cols {
        let col = sample_car_column(c[r], rho[r], nu2[r], nb, rng)?;
        for (b, v) in col.into_iter().enumerate() {
            pi[b * cols + r] = v;
        }
    }
    Ok(pi)
}

/// Minimum fraction of accepted locations before truncated sampling gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// Draws `n_t ~ Poisson(δ_t)` locations per period from the truth mixture.
pub fn simulate(scenario: &Scenario) -> Result<Vec<Event>> {
    scenario.validate()?;
    let mut rng = chain_rng(scenario.seed, 0);
    let truth = &scenario.truth;
    let chols: Vec<_> = truth
        .components
        .iter()
        .map(|c| c.sigma.cholesky().ok_or_else(|| Error::NotPositiveDefinite { what: "truth covariance".into() }))
        .collect::<Result<_>>()?;
    let mut events = Vec::new();
    let (mut tried, mut kept) = (0u64, 0u64);
    for (ti, &d) in scenario.delta.iter().enumerate() {
        let t = ti + 1;
        let n = if d > 0.0 {
            Poisson::new(d).map_err(|e| Error::Domain(format!("Poisson({d}): {e}")))?.sample(&mut rng) as usize
        } else {
            0
        };
        let row = truth.weights.row(truth.season.block_index(t));
        for _ in 0..n {
            loop {
                let j = pick(row, &mut rng);
                let s = sample_mvn2(&truth.components[j].mu, &chols[j], &mut rng);
                tried += 1;
                if !scenario.truncate || scenario.region.contains(&s) {
                    kept += 1;
                    events.push(Event { t, location: s });
                    break;
                }
                if tried >= 10_000 && (kept as f64) < MIN_ACCEPTANCE * tried as f64 {
                    return Err(Error::DegenerateScenario { rate: kept as f64 / tried as f64 });
                }
            }
        }
    }
    Ok(events)
}

fn pick<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}

/// Component written as `mu = [x, y]`, `sigma = [xx, xy, yy]` in scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub mu: [f64; 2],
    pub sigma: [f64; 3],
}

/// Human-editable scenario description; the transformed weights are drawn
/// from the CAR prior with the given hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub components: Vec<ComponentSpec>,
    pub c: Vec<f64>,
    pub rho: Vec<f64>,
    pub nu2: Vec<f64>,
    /// Expected count per period, constant over time.
    pub delta: f64,
    #[serde(default)]
    pub season: SeasonalityConfig,
    /// Region vertices `[x, y]`.
    pub region: Vec<[f64; 2]>,
    #[serde(default = "default_resolution")]
    pub grid_resolution: f64,
    pub seed: u64,
    #[serde(default)]
    pub truncate: bool,
}

fn default_resolution() -> f64 {
    0.5
}

impl ScenarioSpec {
    /// Draws the weights (stream 1 of the seed) and assembles the scenario.
    pub fn build(&self) -> Result<Scenario> {
        self.season.validate()?;
        let nb = CarNeighborhood::new(self.season.block, self.season.per_day)?;
        let mut rng = chain_rng(self.seed, 1);
        let pi = sample_car_weights(&self.c, &self.rho, &self.nu2, &nb, &mut rng)?;
        let car = CarState::new(self.season.block, pi, self.c.clone(), self.rho.clone(), self.nu2.clone())?;
        let components = self
            .components
            .iter()
            .map(|c| Component::new(SpatialPoint::new(c.mu[0], c.mu[1]), Sym2::new(c.sigma[0], c.sigma[1], c.sigma[2])))
            .collect();
        let region = StudyRegion::new(self.region.iter().map(|p| SpatialPoint::new(p[0], p[1])).collect(), self.grid_resolution)?;
        let mut s = Scenario::new(components, car, self.season, vec![self.delta; self.season.periods], region, self.seed)?;
        s.truncate = self.truncate;
        Ok(s)
    }
}
