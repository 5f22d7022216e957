//! Sample-size-adaptive particle filtering.
//!
//! The crate provides three resampling strategies for a bootstrap particle
//! filter:
//!
//! * fixed-size multinomial resampling,
//! * KLD-resampling, which draws particles one at a time from the weighted
//!   posterior and stops once the number of draws satisfies the
//!   Kullback-Leibler sample-size bound for the number of occupied bins,
//! * KLD-sampling, which applies the same bound while sampling from the
//!   predictive distribution.
//!
//! A bearing-only target tracking model and a Monte Carlo harness
//! ([`benchmark`]) compare the three on a common scenario. The `pfbench`
//! binary is a thin CLI over that harness.

pub mod benchmark;
pub mod error;
pub mod filter_core;
pub mod particle_core;
pub mod resampling;
pub mod sample_size;
pub mod tracking_model;

pub use error::{Error, Result};
pub use filter_core::{FilterState, StepOutput};
pub use particle_core::{bin_index, BinConfig, BinGrid, CellIndex, Particle, ParticleSet};
pub use resampling::{
    fixed_resample, kld_resample, kld_sampling_predict, multinomial_draw, MethodTag, ResampleMethod,
};
pub use sample_size::{
    chi_square_quantile, kl_divergence, required_sample_size, std_normal_quantile,
    DiscreteDistribution, SampleSizeBound, SizeRule,
};
pub use tracking_model::TrackingScenario;
