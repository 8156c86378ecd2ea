//! Metropolis-Hastings moves with random-walk and Liu/West proposals, scored
//! by the Mahalanobis squared jumping distance.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particles::WeightedMoments;
use crate::targets::Ordering;

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[serde(alias = "rw")]
    RandomWalk,
    #[serde(alias = "lw")]
    LiuWest,
}

impl KernelKind {
    pub fn label(self) -> &'static str {
        match self {
            KernelKind::RandomWalk => "rw",
            KernelKind::LiuWest => "lw",
        }
    }

    /// Largest admissible scaling.
    pub fn max_scaling(self) -> f64 {
        match self {
            KernelKind::RandomWalk => f64::INFINITY,
            KernelKind::LiuWest => 1.0,
        }
    }
}

/// A proposal family, the label ordering its moments are computed under, and its scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub ordering: Ordering,
    pub h: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, ordering: Ordering, h: f64) -> Result<Self> {
        validate_scaling(kind, h)?;
        Ok(Self { kind, ordering, h })
    }
}

fn validate_scaling(kind: KernelKind, h: f64) -> Result<()> {
    if h > 0.0 && h <= kind.max_scaling() && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScaling(h))
    }
}

/// Outcome of one MH transition from `theta_prev`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveRecord {
    pub theta_prev: DVector<f64>,
    pub theta_proposed: DVector<f64>,
    pub theta_next: DVector<f64>,
    pub acc_prob: f64,
    /// Squared jumping distance of the proposed move.
    pub lambda: f64,
    /// `acc_prob * lambda`.
    pub lambda_tilde: f64,
    pub accepted: bool,
}

fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// `theta + h L z`.
pub fn rw_propose<R: Rng + ?Sized>(theta: &DVector<f64>, h: f64, moments: &WeightedMoments, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vec(theta.len(), rng);
    theta + moments.cholesky_factor() * z * h
}

/// Shrinkage factor `sqrt(1 - h^2)` of the Liu/West proposal.
pub fn liu_west_alpha(h: f64) -> f64 {
    (1.0 - h * h).max(0.0).sqrt()
}

fn liu_west_mean(theta: &DVector<f64>, h: f64, moments: &WeightedMoments) -> DVector<f64> {
    let a = liu_west_alpha(h);
    theta * a + &moments.mean * (1.0 - a)
}

fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, h: f64, moments: &WeightedMoments) -> f64 {
    let d = x.len() as f64;
    let q = moments.mahalanobis_sq(&(x - mean)) / (h * h);
    -0.5 * d * (2.0 * PI).ln() - d * h.ln() - moments.half_log_det() - 0.5 * q
}

/// Log-density of moving `from -> to` under the given proposal.
pub fn proposal_log_density(
    kind: KernelKind,
    from: &DVector<f64>,
    to: &DVector<f64>,
    h: f64,
    moments: &WeightedMoments,
) -> f64 {
    match kind {
        KernelKind::RandomWalk => gaussian_log_density(to, from, h, moments),
        KernelKind::LiuWest => gaussian_log_density(to, &liu_west_mean(from, h, moments), h, moments),
    }
}

/// Liu/West draw `N(alpha theta + (1 - alpha) mean, h^2 Sigma)` with forward and reverse log-densities.
pub fn lw_propose<R: Rng + ?Sized>(
    theta: &DVector<f64>,
    h: f64,
    moments: &WeightedMoments,
    rng: &mut R,
) -> Result<(DVector<f64>, f64, f64)> {
    validate_scaling(KernelKind::LiuWest, h)?;
    let z = standard_normal_vec(theta.len(), rng);
    let draw = liu_west_mean(theta, h, moments) + moments.cholesky_factor() * z * h;
    let log_fwd = proposal_log_density(KernelKind::LiuWest, theta, &draw, h, moments);
    let log_rev = proposal_log_density(KernelKind::LiuWest, &draw, theta, h, moments);
    Ok((draw, log_fwd, log_rev))
}

/// Mahalanobis squared distance `(a - b)^T Sigma^{-1} (a - b)`.
pub fn esjd(theta_prev: &DVector<f64>, theta_next: &DVector<f64>, moments: &WeightedMoments) -> f64 {
    moments.mahalanobis_sq(&(theta_prev - theta_next))
}

/// One Metropolis-Hastings transition. A non-finite log-target at the
/// proposal counts as a rejection.
pub fn mh_step<R, F>(
    theta: &DVector<f64>,
    log_target: F,
    kernel: &KernelSpec,
    moments: &WeightedMoments,
    rng: &mut R,
) -> Result<MoveRecord>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>) -> f64,
{
    let current = log_target(theta);
    if !current.is_finite() {
        return Err(Error::TargetEvaluationFailure);
    }
    mh_step_from(theta, current, log_target, kernel, moments, rng).map(|(rec, _)| rec)
}

/// [`mh_step`] with the log-target at `theta` already known. Also returns the
/// log-target at the resulting state.
pub fn mh_step_from<R, F>(
    theta: &DVector<f64>,
    current: f64,
    log_target: F,
    kernel: &KernelSpec,
    moments: &WeightedMoments,
    rng: &mut R,
) -> Result<(MoveRecord, f64)>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>) -> f64,
{
    if theta.len() != moments.dim() {
        return Err(Error::DimensionMismatch {
            expected: moments.dim(),
            found: theta.len(),
        });
    }
    let (proposed, log_q_ratio) = match kernel.kind {
        KernelKind::RandomWalk => {
            validate_scaling(KernelKind::RandomWalk, kernel.h)?;
            (rw_propose(theta, kernel.h, moments, rng), 0.0)
        }
        KernelKind::LiuWest => {
            let (draw, fwd, rev) = lw_propose(theta, kernel.h, moments, rng)?;
            (draw, rev - fwd)
        }
    };
    let proposed_lp = log_target(&proposed);
    let log_ratio = proposed_lp - current + log_q_ratio;
    let acc_prob = if proposed_lp.is_finite() && !log_ratio.is_nan() {
        log_ratio.min(0.0).exp()
    } else {
        0.0
    };
    let u: f64 = rng.random();
    let accepted = u < acc_prob;
    let lambda = esjd(theta, &proposed, moments);
    let (theta_next, next_lp) = if accepted {
        (proposed.clone(), proposed_lp)
    } else {
        (theta.clone(), current)
    };
    Ok((
        MoveRecord {
            theta_prev: theta.clone(),
            theta_proposed: proposed,
            theta_next,
            acc_prob,
            lambda,
            lambda_tilde: acc_prob * lambda,
            accepted,
        },
        next_lp,
    ))
}

/// Asymptotically optimal random-walk scaling `2.38 / sqrt(d)` for Gaussian targets.
pub fn reference_rw_scaling(d: usize) -> f64 {
    2.38 / (d as f64).sqrt()
}

/// Scaling `2.4 / sqrt(3r - 1)` used by the adaptive-Metropolis baseline on `r`-component mixtures.
pub fn amcmc_scaling(components: usize) -> f64 {
    2.4 / ((3 * components - 1) as f64).sqrt()
}
