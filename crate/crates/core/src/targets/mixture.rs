//! Univariate Gaussian mixtures with `r` components, sampled in a transformed space.
//!
//! Parameter layout (length `3r - 1`):
//!
//! ```text
//! [ log(p_1/p_r) .. log(p_{r-1}/p_r) | log v_1 .. log v_r | mu_1 .. mu_r ]
//! ```
//!
//! The reference component for the logits is always the last component of
//! the current labelling.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_normal_pdf, SequentialTarget};
use crate::error::{Error, Result};

/// Label ordering used to pick one representative of the `r!` symmetric modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    ByMeans,
    ByVariances,
    None,
}

impl Ordering {
    pub fn label(self) -> &'static str {
        match self {
            Ordering::ByMeans => "means",
            Ordering::ByVariances => "variances",
            Ordering::None => "none",
        }
    }
}

/// Independent Gaussian prior on one block of transformed coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

pub const LOGIT_PRIOR: NormalPrior = NormalPrior { mean: 0.0, sd: 1.0 };
pub const LOG_VARIANCE_PRIOR: NormalPrior = NormalPrior { mean: -1.5, sd: 1.3 };
pub const MEAN_PRIOR: NormalPrior = NormalPrior { mean: 0.0, sd: 0.75 };

/// Natural parameters of an `r`-component mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let r = weights.len();
        if r == 0 {
            return Err(Error::InvalidConfig("a mixture needs at least one component".into()));
        }
        for len in [means.len(), variances.len()] {
            if len != r {
                return Err(Error::LengthMismatch { expected: r, found: len });
            }
        }
        if weights.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidConfig("mixture weights must be positive".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("mixture weights must sum to one".into()));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("mixture variances must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("mixture means must be finite".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Dimension of the transformed parameter vector.
    pub fn param_dim(&self) -> usize {
        3 * self.components() - 1
    }
}

/// `log sum_j p_j N(y; mu_j, v_j)` via log-sum-exp.
pub fn mixture_log_lik(spec: &MixtureSpec, y: f64) -> f64 {
    log_sum_exp(
        spec.weights
            .iter()
            .zip(&spec.means)
            .zip(&spec.variances)
            .map(|((&p, &m), &v)| p.ln() + log_normal_pdf(y, m, v)),
    )
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Number of components for a transformed vector of length `3r - 1`.
pub fn components_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || (dim + 1) % 3 != 0 {
        return Err(Error::DimensionMismatch {
            expected: 3 * ((dim + 1) / 3).max(1) - 1,
            found: dim,
        });
    }
    Ok((dim + 1) / 3)
}

pub fn transform(spec: &MixtureSpec) -> DVector<f64> {
    let r = spec.components();
    let log_ref = spec.weights[r - 1].ln();
    let logits = spec.weights[..r - 1].iter().map(|p| p.ln() - log_ref);
    let log_vars = spec.variances.iter().map(|v| v.ln());
    DVector::from_iterator(3 * r - 1, logits.chain(log_vars).chain(spec.means.iter().copied()))
}

/// Total map from `R^{3r-1}` back to natural parameters.
///
/// # Panics
/// If `theta.len()` is not of the form `3r - 1`.
pub fn inverse_transform(theta: &DVector<f64>) -> MixtureSpec {
    let r = components_for_dim(theta.len()).expect("mixture parameter length must be 3r - 1");
    let logits: Vec<f64> = theta.iter().take(r - 1).copied().chain(std::iter::once(0.0)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    MixtureSpec {
        weights: unnorm.into_iter().map(|u| u / total).collect(),
        variances: theta.iter().skip(r - 1).take(r).map(|lv| lv.exp()).collect(),
        means: theta.iter().skip(2 * r - 1).copied().collect(),
    }
}

fn block_prior(i: usize, r: usize) -> NormalPrior {
    if i < r - 1 {
        LOGIT_PRIOR
    } else if i < 2 * r - 1 {
        LOG_VARIANCE_PRIOR
    } else {
        MEAN_PRIOR
    }
}

/// Independent Gaussian prior density of a transformed vector.
pub fn mixture_prior_logdensity(theta: &DVector<f64>, r: usize) -> Result<f64> {
    if theta.len() != 3 * r - 1 {
        return Err(Error::DimensionMismatch {
            expected: 3 * r - 1,
            found: theta.len(),
        });
    }
    Ok(theta
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = block_prior(i, r);
            log_normal_pdf(x, p.mean, p.sd * p.sd)
        })
        .sum())
}

pub fn sample_mixture_prior(rng: &mut dyn RngCore, r: usize) -> DVector<f64> {
    DVector::from_fn(3 * r - 1, |i, _| {
        let p = block_prior(i, r);
        let z: f64 = StandardNormal.sample(&mut *rng);
        p.mean + p.sd * z
    })
}

pub fn mixture_prior_covariance(r: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(3 * r - 1, |i, _| block_prior(i, r).sd.powi(2)))
}

/// Sorts components jointly by the ordering key (stable, ties keep their
/// original order) and re-expresses the result in transformed coordinates.
pub fn relabel(theta: &DVector<f64>, ordering: Ordering) -> DVector<f64> {
    if ordering == Ordering::None {
        return theta.clone();
    }
    let spec = inverse_transform(theta);
    let key = match ordering {
        Ordering::ByMeans => &spec.means,
        Ordering::ByVariances => &spec.variances,
        Ordering::None => unreachable!(),
    };
    let mut perm: Vec<usize> = (0..spec.components()).collect();
    perm.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return theta.clone();
    }
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    transform(&MixtureSpec {
        weights: pick(&spec.weights),
        means: pick(&spec.means),
        variances: pick(&spec.variances),
    })
}

/// Posterior of an `r`-component mixture given scalar observations.
#[derive(Debug, Clone)]
pub struct MixtureTarget {
    components: usize,
    observations: Vec<f64>,
}

impl MixtureTarget {
    pub fn new(components: usize, observations: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidConfig("a mixture needs at least one component".into()));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidConfig("observations must be finite".into()));
        }
        Ok(Self {
            components,
            observations,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Observation density `pi(y | theta)`.
    pub fn density(&self, theta: &DVector<f64>, y: f64) -> f64 {
        mixture_log_lik(&inverse_transform(theta), y).exp()
    }
}

impl SequentialTarget for MixtureTarget {
    fn dim(&self) -> usize {
        3 * self.components - 1
    }

    fn n_obs(&self) -> usize {
        self.observations.len()
    }

    fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        mixture_prior_logdensity(theta, self.components).expect("parameter dimension")
    }

    fn log_lik_increment(&self, theta: &DVector<f64>, t: usize) -> f64 {
        mixture_log_lik(&inverse_transform(theta), self.observations[t - 1])
    }

    fn log_posterior_upto(&self, theta: &DVector<f64>, t: usize) -> f64 {
        let spec = inverse_transform(theta);
        self.observations[..t]
            .iter()
            .fold(self.log_prior(theta), |acc, &y| acc + mixture_log_lik(&spec, y))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        sample_mixture_prior(rng, self.components)
    }

    fn prior_covariance(&self) -> DMatrix<f64> {
        mixture_prior_covariance(self.components)
    }

    fn relabel(&self, theta: &DVector<f64>, ordering: Ordering) -> DVector<f64> {
        relabel(theta, ordering)
    }
}
