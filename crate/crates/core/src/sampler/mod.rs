//! Fixed-K posterior sampler: latent labels, conjugate Gibbs updates for the
//! component parameters and β, random-walk Metropolis–Hastings for the
//! transformed weights and their CAR hyperparameters; optional birth-death
//! moves over the number of components.

pub mod bdmcmc;
pub mod chain;
pub mod gibbs;
pub mod metropolis;
pub mod state;

pub use bdmcmc::{
    death_rate, death_rates, removal_log_ratios, run_bd_stage, truncated_poisson_logpmf, BirthDeathConfig, StageEvents,
};
pub use chain::{
    chain_rng, initialize_from_kmeans, initialize_from_prior, neighbourhood, run_bd_chain, run_bd_chain_indexed,
    run_bd_chains, run_chain, run_chain_indexed, run_chains, snapshot, ChainOutput, Sampler,
};
pub use gibbs::{
    beta_conditional, covariance_conditional, label_probabilities, mean_conditional, update_beta, update_covariances,
    update_labels, update_means,
};
pub use metropolis::{
    car_hyper_log_target, mh_update_car_hyper, mh_update_weights, weight_log_ratio, Acceptance, Counter, StepSizes,
};
pub use state::{ChainState, DensityCache, EventData, InitMethod, McmcConfig, PosteriorDraw};
