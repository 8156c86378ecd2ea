use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{log_normal_pdf, SequentialTarget};
use crate::error::{Error, Result};

/// `y_t ~ N(theta, I_d)` with prior `theta ~ N(0, prior_var * I_d)`.
#[derive(Debug, Clone)]
pub struct GaussianMeanTarget {
    observations: Vec<DVector<f64>>,
    prior_var: f64,
    dim: usize,
}

impl GaussianMeanTarget {
    pub fn new(dim: usize, observations: Vec<DVector<f64>>, prior_var: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if let Some(y) = observations.iter().find(|y| y.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: y.len(),
            });
        }
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::InvalidConfig(format!("prior variance must be positive, got {prior_var}")));
        }
        Ok(Self {
            observations,
            prior_var,
            dim,
        })
    }

    /// Simulates `n` observations from `N(0, I_dim)`.
    pub fn simulate(dim: usize, n: usize, prior_var: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let obs = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut *rng)))
            .collect();
        Self::new(dim, obs, prior_var)
    }

    pub fn observations(&self) -> &[DVector<f64>] {
        &self.observations
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    fn check(&self, theta: &DVector<f64>) {
        assert_eq!(theta.len(), self.dim, "parameter dimension");
    }
}

impl SequentialTarget for GaussianMeanTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_obs(&self) -> usize {
        self.observations.len()
    }

    fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        self.check(theta);
        theta.iter().map(|&x| log_normal_pdf(x, 0.0, self.prior_var)).sum()
    }

    fn log_lik_increment(&self, theta: &DVector<f64>, t: usize) -> f64 {
        self.check(theta);
        let y = &self.observations[t - 1];
        y.iter().zip(theta.iter()).map(|(&yi, &m)| log_normal_pdf(yi, m, 1.0)).sum()
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let sd = self.prior_var.sqrt();
        DVector::from_fn(self.dim, |_, _| { let z: f64 = StandardNormal.sample(&mut *rng); sd * z })
    }

    fn prior_covariance(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.prior_var
    }
}

/// Exact conjugate posterior of the Gaussian-mean model:
/// covariance `(1/prior_var + n)^{-1} I`, mean `covariance * sum y_t`.
pub fn kalman_posterior(dim: usize, observations: &[DVector<f64>], prior_var: f64) -> (DVector<f64>, DMatrix<f64>) {
    let precision = 1.0 / prior_var + observations.len() as f64;
    let var = 1.0 / precision;
    let sum = observations.iter().fold(DVector::zeros(dim), |acc, y| acc + y);
    (sum * var, DMatrix::identity(dim, dim) * var)
}
