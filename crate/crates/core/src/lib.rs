//! Adaptive sequential Monte Carlo for data-tempered posteriors.
//!
//! The sampler carries a population of (kernel, scaling) pairs alongside the
//! particles, scores each pair by the acceptance-weighted squared jumping
//! distance it produced, and resamples the pairs so that productive kernels
//! and scalings take over. IBIS with a fixed kernel and an adaptive
//! Metropolis baseline are included for comparison.

pub mod adaptation;
pub mod amcmc;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kernels;
pub mod particles;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod targets;
pub mod theory;

pub use error::{Error, Result};
pub use samplers::{asmc_run, ibis_run, Method, RunConfig, RunTrace};
