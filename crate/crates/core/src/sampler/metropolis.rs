//! Random-walk Metropolis–Hastings for the transformed weights and the CAR hyperparameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::state::{scaled_mixture_log, ChainState, DensityCache, EventData, McmcConfig};
use crate::model::inverse_logit;
use crate::priors::car::{car_conditional, car_log_density, CarNeighborhood, CarState};
use crate::priors::density::car_hyper_log_prior;
use crate::priors::{C_PRIOR_VAR, NU2_MAX, RHO_MAX};

/// Current random-walk scales of the four MH families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub pi: f64,
    pub c: f64,
    pub rho: f64,
    pub lognu: f64,
}

impl StepSizes {
    pub fn from_config(cfg: &McmcConfig) -> Self {
        Self { pi: cfg.rw_step_pi, c: cfg.rw_step_c, rho: cfg.rw_step_rho, lognu: cfg.rw_step_lognu }
    }
}

/// Accepted / proposed counts for one MH family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    #[inline]
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: &Counter) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub pi: Counter,
    pub c: Counter,
    pub rho: Counter,
    pub nu: Counter,
}

impl Acceptance {
    pub fn merge(&mut self, other: &Acceptance) {
        self.pi.merge(&other.pi);
        self.c.merge(&other.c);
        self.rho.merge(&other.rho);
        self.nu.merge(&other.nu);
    }

    /// Acceptance rates `[π, c, ρ, ν²]`.
    pub fn rates(&self) -> [f64; 4] {
        [self.pi.rate(), self.c.rate(), self.rho.rate(), self.nu.rate()]
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    // ln U < log ratio; U in (0, 1]
    (1.0 - rng.random::<f64>()).ln() < log_ratio
}

/// Proposal standard deviation for `π_{b,r}`: `step` over the square root of
/// the CAR conditional precision plus a binomial information term from the
/// current labels. Depends only on quantities held fixed during the update,
/// so the proposal stays symmetric.
pub fn pi_proposal_sd(step: f64, nu2: f64, n_block: usize, n_component: usize) -> f64 {
    let q = (n_component as f64 + 0.5) / (n_block as f64 + 1.0);
    step / (1.0 / nu2 + n_block as f64 * q * (1.0 - q)).sqrt()
}

/// Log acceptance ratio for moving `π_{b,r}` to `proposal`: block `b`'s mixture
/// log-likelihood difference plus the CAR conditional prior difference.
pub fn weight_log_ratio(
    state: &ChainState,
    data: &EventData,
    cache: &DensityCache,
    nb: &CarNeighborhood,
    b: usize,
    r: usize,
    proposal: f64,
) -> f64 {
    let current = state.car.pi_at(b, r);
    let mut row = state.car.pi_row(b).to_vec();
    row[r] = proposal;
    let new_w = inverse_logit(&row);
    let old_w = state.mixture.weights.row(b);
    let mut ll = 0.0;
    for &i in &data.by_block[b] {
        ll += scaled_mixture_log(&new_w, cache.scaled(i), cache.log_phi(i))
            - scaled_mixture_log(old_w, cache.scaled(i), cache.log_phi(i));
    }
    let (m, v) = car_conditional(b, r, &state.car, nb);
    ll - 0.5 * ((proposal - m).powi(2) - (current - m).powi(2)) / v
}

// below this a scaled mixture sum is recomputed in log space
const SAFE_SUM: f64 = 1e-250;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ ln(a_i / b_i)` taking one logarithm per chunk of ratios.
fn log_ratio_sum(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (ca, cb) in a.chunks(16).zip(b.chunks(16)) {
        let mut prod = 1.0;
        for (x, y) in ca.iter().zip(cb) {
            prod *= x / y;
        }
        total += if prod.is_finite() && prod > 0.0 {
            prod.ln()
        } else {
            ca.iter().zip(cb).map(|(x, y)| (x / y).ln()).sum()
        };
    }
    total
}

/// One single-site sweep over every `(b, r)` of the transformed weights.
pub fn mh_update_weights<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &EventData,
    cache: &DensityCache,
    nb: &CarNeighborhood,
    step: f64,
    rng: &mut R,
) -> Counter {
    let mut counter = Counter::default();
    let cols = state.car.cols;
    if cols == 0 {
        return counter;
    }
    let k = cols + 1;
    let counts = state.label_counts(data);
    let mut sums: Vec<f64> = Vec::new();
    let mut new_sums: Vec<f64> = Vec::new();
    let mut row = vec![0.0; cols];
    for b in 0..state.car.blocks {
        let idx = &data.by_block[b];
        let n_b = idx.len();
        sums.clear();
        {
            let w = state.mixture.weights.row(b);
            sums.extend(idx.iter().map(|&i| dot(w, cache.scaled(i))));
        }
        for r in 0..cols {
            let current = state.car.pi_at(b, r);
            let sd = pi_proposal_sd(step, state.car.nu2[r], n_b, counts[b * k + r]);
            let proposal = current + sd * rng.sample::<f64, _>(StandardNormal);
            row.copy_from_slice(state.car.pi_row(b));
            row[r] = proposal;
            let new_w = inverse_logit(&row);
            new_sums.clear();
            new_sums.extend(idx.iter().map(|&i| dot(&new_w, cache.scaled(i))));
            let ll = if sums.iter().chain(&new_sums).all(|&v| v > SAFE_SUM) {
                log_ratio_sum(&new_sums, &sums)
            } else {
                let old_w = state.mixture.weights.row(b);
                idx.iter()
                    .map(|&i| {
                        scaled_mixture_log(&new_w, cache.scaled(i), cache.log_phi(i))
                            - scaled_mixture_log(old_w, cache.scaled(i), cache.log_phi(i))
                    })
                    .sum()
            };
            let (m, v) = car_conditional(b, r, &state.car, nb);
            let log_ratio = ll - 0.5 * ((proposal - m).powi(2) - (current - m).powi(2)) / v;
            let ok = log_ratio.is_finite() && accept(log_ratio, rng);
            counter.record(ok);
            if ok {
                state.car.pi[b * cols + r] = proposal;
                state.mixture.weights.row_mut(b).copy_from_slice(&new_w);
                std::mem::swap(&mut sums, &mut new_sums);
            }
        }
    }
    counter
}

/// Log target of column `r`'s hyperparameters: CAR joint density of the column times the hyperpriors.
pub fn car_hyper_log_target(column: &[f64], c: f64, rho: f64, nu2: f64, nb: &CarNeighborhood) -> f64 {
    let prior = car_hyper_log_prior(c, rho, nu2);
    if prior == f64::NEG_INFINITY {
        return prior;
    }
    prior + car_log_density(column, c, rho, nu2, nb)
}

/// Proposal standard deviation for `c_r`: `step` over the square root of the
/// conditional precision of `c_r` given its column.
pub fn c_proposal_sd(step: f64, blocks: usize, rho: f64, nu2: f64) -> f64 {
    step / (blocks as f64 * (1.0 - 4.0 * rho) / nu2 + 1.0 / C_PRIOR_VAR).sqrt()
}

/// Random-walk updates of `c_r`, `ρ_r` and `ν²_r` (the last on the log scale) for every column.
pub fn mh_update_car_hyper<R: Rng + ?Sized>(
    car: &mut CarState,
    nb: &CarNeighborhood,
    steps: &StepSizes,
    rng: &mut R,
) -> (Counter, Counter, Counter) {
    let (mut cc, mut cr, mut cn) = (Counter::default(), Counter::default(), Counter::default());
    for r in 0..car.cols {
        let col = car.column(r);
        let (c, rho, nu2) = (car.c[r], car.rho[r], car.nu2[r]);
        let mut cur = car_hyper_log_target(&col, c, rho, nu2, nb);

        let c_new = c + c_proposal_sd(steps.c, car.blocks, rho, nu2) * rng.sample::<f64, _>(StandardNormal);
        let t = car_hyper_log_target(&col, c_new, rho, nu2, nb);
        let ok = accept(t - cur, rng);
        cc.record(ok);
        if ok {
            car.c[r] = c_new;
            cur = t;
        }

        let rho_new = rho + steps.rho * rng.sample::<f64, _>(StandardNormal);
        let ok = if (0.0..RHO_MAX).contains(&rho_new) {
            let t = car_hyper_log_target(&col, car.c[r], rho_new, nu2, nb);
            let ok = accept(t - cur, rng);
            if ok {
                car.rho[r] = rho_new;
                cur = t;
            }
            ok
        } else {
            false
        };
        cr.record(ok);

        let nu2_new = nu2 * (steps.lognu * rng.sample::<f64, _>(StandardNormal)).exp();
        let ok = if nu2_new > 0.0 && nu2_new <= NU2_MAX {
            // Jacobian of the log-scale walk
            let t = car_hyper_log_target(&col, car.c[r], car.rho[r], nu2_new, nb) + nu2_new.ln() - nu2.ln();
            let ok = accept(t - cur, rng);
            if ok {
                car.nu2[r] = nu2_new;
            }
            ok
        } else {
            false
        };
        cn.record(ok);
    }
    (cc, cr, cn)
}
