//! Accumulated-loss tracking and the mixture-based noise-rate estimate.

mod aul;
mod gmm;

pub use aul::AulAccumulator;
pub use gmm::{
    estimate_noise_rate, estimate_tau, gmm_fit_em, posterior_dump_csv, posterior_large, Component, EmOptions,
    GmmFit, DEFAULT_TAU_MAX, MIN_SEPARATION, MIN_VALUES,
};
