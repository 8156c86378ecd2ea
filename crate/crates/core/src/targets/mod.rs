//! Data-tempered posterior sequences `pi_t(theta) = pi(theta | y_1..y_t)`.

mod datasets;
mod gaussian;
mod mixture;

pub use datasets::{dataset_components, dataset_spec, simulate_dataset, DATASET_COUNT};
pub use gaussian::{kalman_posterior, GaussianMeanTarget};
pub use mixture::{
    inverse_transform, mixture_log_lik, mixture_prior_covariance, mixture_prior_logdensity, relabel,
    sample_mixture_prior, transform, MixtureSpec, MixtureTarget, Ordering, LOGIT_PRIOR, LOG_VARIANCE_PRIOR,
    MEAN_PRIOR,
};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use std::f64::consts::PI;

/// A posterior built up one observation at a time.
///
/// Observation indices are 1-based: `log_lik_increment(theta, t)` is
/// `log pi(y_t | theta)` for `t` in `1..=n_obs()`.
pub trait SequentialTarget {
    fn dim(&self) -> usize;

    fn n_obs(&self) -> usize;

    fn log_prior(&self, theta: &DVector<f64>) -> f64;

    fn log_lik_increment(&self, theta: &DVector<f64>, t: usize) -> f64;

    /// `log pi(theta) + sum_{s <= t} log pi(y_s | theta)`.
    fn log_posterior_upto(&self, theta: &DVector<f64>, t: usize) -> f64 {
        (1..=t).fold(self.log_prior(theta), |acc, s| acc + self.log_lik_increment(theta, s))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Prior covariance in the sampling parameterization.
    fn prior_covariance(&self) -> DMatrix<f64>;

    /// Maps `theta` to its representative under a label ordering. Identity
    /// for models without exchangeable components.
    fn relabel(&self, theta: &DVector<f64>, _ordering: Ordering) -> DVector<f64> {
        theta.clone()
    }
}

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + z * z / var)
}
