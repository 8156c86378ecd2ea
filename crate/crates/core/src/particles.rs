//! Weighted particle sets: log-weight normalization, ESS, resampling and
//! weighted moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// `M` parameter vectors with unnormalized log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    particles: Vec<DVector<f64>>,
    log_weights: Vec<f64>,
}

impl ParticleSystem {
    /// Builds a system with equal weights.
    pub fn new(particles: Vec<DVector<f64>>) -> Result<Self> {
        let m = particles.len();
        Self::with_log_weights(particles, vec![0.0; m])
    }

    pub fn with_log_weights(particles: Vec<DVector<f64>>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                expected: particles.len(),
                found: log_weights.len(),
            });
        }
        let d = particles.first().map(|p| p.len()).ok_or(Error::LengthMismatch {
            expected: 1,
            found: 0,
        })?;
        if d == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if let Some(p) = particles.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        Ok(Self {
            particles,
            log_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_weights_mut(&mut self) -> &mut [f64] {
        &mut self.log_weights
    }

    pub fn into_particles(self) -> Vec<DVector<f64>> {
        self.particles
    }

    /// Normalized weights (see [`normalize_log_weights`]).
    pub fn weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights).map(|(w, _)| w)
    }

    /// Replaces the particles by the selected indices and resets the weights to `1/M`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let particles: Vec<_> = indices.iter().map(|&i| self.particles[i].clone()).collect();
        let log_weights = vec![0.0; particles.len()];
        Self {
            particles,
            log_weights,
        }
    }
}

/// Log-sum-exp normalization. Returns the weights and the log of the normalizing constant.
///
/// NaN entries are treated as `-inf`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // all -inf/NaN, or a +inf entry which has no meaningful normalization
        return Err(Error::AllWeightsDegenerate);
    }
    let shifted: Vec<f64> = log_weights
        .iter()
        .map(|&lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .collect();
    let total: f64 = shifted.iter().sum();
    let weights = shifted.into_iter().map(|w| w / total).collect();
    Ok((weights, max + total.ln()))
}

/// Effective sample size `1 / sum w^2` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|&w| {
            acc += w;
            acc
        })
        .collect()
}

fn categorical<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let u = rng.random::<f64>() * total;
    let j = cdf.partition_point(|&c| c <= u);
    // u can land on the upper boundary through rounding; step back to a positive-weight index.
    let mut j = j.min(cdf.len() - 1);
    while j > 0 && cdf[j] == cdf[j - 1] {
        j -= 1;
    }
    j
}

/// Draws `count` iid indices from `Categorical(weights)`, returned sorted ascending.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let cdf = cumulative(weights);
    let mut out: Vec<usize> = (0..count).map(|_| categorical(&cdf, rng)).collect();
    out.sort_unstable();
    out
}

/// Residual resampling: `floor(count * w_j)` deterministic copies of index `j`,
/// the remainder drawn multinomially from the residual weights. Sorted ascending.
pub fn residual_resample<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(weights.len());
    for (j, &w) in weights.iter().enumerate() {
        let expected = count as f64 * w;
        let copies = expected.floor() as usize;
        let copies = copies.min(count - out.len());
        out.extend(std::iter::repeat_n(j, copies));
        residuals.push((expected - copies as f64).max(0.0));
    }
    let remaining = count - out.len();
    if remaining > 0 {
        let cdf = cumulative(&residuals);
        if cdf.last().copied().unwrap_or(0.0) > 0.0 {
            out.extend((0..remaining).map(|_| categorical(&cdf, rng)));
        } else {
            let cdf = cumulative(weights);
            out.extend((0..remaining).map(|_| categorical(&cdf, rng)));
        }
    }
    out.sort_unstable();
    out
}

/// Particle resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    Residual,
    Multinomial,
}

impl Resampler {
    pub fn resample<R: Rng + ?Sized>(self, weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
        match self {
            Resampler::Residual => residual_resample(weights, count, rng),
            Resampler::Multinomial => multinomial_resample(weights, count, rng),
        }
    }
}

/// Relative pivot floor below which a Cholesky factorization is treated as failed.
const PIVOT_FLOOR: f64 = 1e-12;
const JITTER_BASE: f64 = 1e-8;
const MAX_DOUBLINGS: u32 = 20;

/// Mean, covariance and the lower Cholesky factor of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Set when jitter had to be added to make the covariance factorizable.
    pub regularized: bool,
    cholesky: DMatrix<f64>,
}

fn strict_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let scale = m.trace() / d as f64;
    if !scale.is_finite() || scale <= 0.0 {
        return None;
    }
    let l = nalgebra::Cholesky::new(m.clone())?.unpack();
    let floor = PIVOT_FLOOR * scale;
    (0..d).all(|i| l[(i, i)] * l[(i, i)] > floor).then_some(l)
}

impl WeightedMoments {
    /// Wraps a mean and covariance, adding `lambda * I` with
    /// `lambda = 1e-8 * max(trace/d, 1)` (doubled up to 20 times) when the
    /// covariance does not factorize.
    pub fn from_mean_cov(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        if covariance.iter().any(|x| !x.is_finite()) || mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::CovarianceNotFactorizable);
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        if let Some(cholesky) = strict_cholesky(&covariance) {
            return Ok(Self {
                mean,
                covariance,
                regularized: false,
                cholesky,
            });
        }
        let mut lambda = JITTER_BASE * (covariance.trace() / d as f64).max(1.0);
        for _ in 0..=MAX_DOUBLINGS {
            let jittered = &covariance + DMatrix::identity(d, d) * lambda;
            if let Some(cholesky) = strict_cholesky(&jittered) {
                return Ok(Self {
                    mean,
                    covariance: jittered,
                    regularized: true,
                    cholesky,
                });
            }
            lambda *= 2.0;
        }
        Err(Error::CovarianceNotFactorizable)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Lower-triangular `L` with `L L^T = covariance`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    /// `x^T Σ^{-1} x` through a triangular solve.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> f64 {
        let z = self
            .cholesky
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    /// `sum_i log L_ii`, i.e. half the log-determinant of the covariance.
    pub fn half_log_det(&self) -> f64 {
        self.cholesky.diagonal().iter().map(|x| x.ln()).sum()
    }
}

/// Weighted mean and covariance of a particle system.
pub fn weighted_moments(system: &ParticleSystem) -> Result<WeightedMoments> {
    let weights = system.weights()?;
    moments_of(system.particles(), &weights)
}

/// Weighted mean and covariance of `particles` under normalized `weights`.
pub fn moments_of(particles: &[DVector<f64>], weights: &[f64]) -> Result<WeightedMoments> {
    if particles.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: particles.len(),
            found: weights.len(),
        });
    }
    let d = particles.first().map(|p| p.len()).ok_or(Error::LengthMismatch { expected: 1, found: 0 })?;
    let mut mean = DVector::zeros(d);
    for (p, &w) in particles.iter().zip(weights) {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        mean.axpy(w, p, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, &w) in particles.iter().zip(weights) {
        let c = p - &mean;
        cov.ger(w, &c, &c, 1.0);
    }
    WeightedMoments::from_mean_cov(mean, cov)
}

/// Moments of an equally weighted particle set.
pub fn equal_weight_moments(particles: &[DVector<f64>]) -> Result<WeightedMoments> {
    let w = vec![1.0 / particles.len() as f64; particles.len()];
    moments_of(particles, &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn normalize_examples() {
        let (w, z) = normalize_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!((z - 2f64.ln()).abs() < 1e-15);

        let (w, z) = normalize_log_weights(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
        assert_eq!(z, 0.0);

        let (w, z) = normalize_log_weights(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert!((z - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_all_neg_inf() {
        assert_eq!(
            normalize_log_weights(&[f64::NEG_INFINITY; 3]),
            Err(Error::AllWeightsDegenerate)
        );
        assert_eq!(normalize_log_weights(&[f64::NAN]), Err(Error::AllWeightsDegenerate));
    }

    #[test]
    fn normalize_survives_huge_offsets() {
        let (w, _) = normalize_log_weights(&[-1e5, -1e5 + 3f64.ln()]).unwrap();
        assert!((w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[0.5, 0.5]), 2.0);
        assert_eq!(ess(&[1.0, 0.0]), 1.0);
        assert!((ess(&[0.7, 0.3]) - 1.72414).abs() < 1e-5);
    }

    #[test]
    fn multinomial_point_mass() {
        let mut rng = substream(1, &[0]);
        assert_eq!(multinomial_resample(&[1.0, 0.0, 0.0], 5, &mut rng), vec![0; 5]);
    }

    #[test]
    fn multinomial_uniform_frequencies() {
        let mut rng = substream(2, &[0]);
        let idx = multinomial_resample(&[0.25; 4], 100_000, &mut rng);
        let mut counts = [0usize; 4];
        idx.iter().for_each(|&i| counts[i] += 1);
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.005, "{counts:?}");
        }
    }

    #[test]
    fn resampling_is_deterministic_and_sorted() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let a = multinomial_resample(&w, 50, &mut substream(3, &[0]));
        let b = multinomial_resample(&w, 50, &mut substream(3, &[0]));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|p| p[0] <= p[1]));
        let r = residual_resample(&w, 50, &mut substream(3, &[1]));
        assert!(r.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn residual_examples() {
        let mut rng = substream(4, &[0]);
        let idx = residual_resample(&[0.5, 0.25, 0.25], 4, &mut rng);
        assert_eq!(idx, vec![0, 0, 1, 2]);
        assert_eq!(residual_resample(&[1.0, 0.0], 3, &mut rng), vec![0, 0, 0]);
    }

    #[test]
    fn residual_respects_floors() {
        let w = [0.13, 0.41, 0.07, 0.39];
        let mut rng = substream(5, &[0]);
        for _ in 0..100 {
            let idx = residual_resample(&w, 37, &mut rng);
            assert_eq!(idx.len(), 37);
            for (j, &wj) in w.iter().enumerate() {
                let n = idx.iter().filter(|&&i| i == j).count();
                assert!(n >= (37.0 * wj).floor() as usize);
            }
        }
    }

    #[test]
    fn moments_two_points() {
        let ps = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, 0.0])];
        let m = weighted_moments(&ParticleSystem::new(ps).unwrap()).unwrap();
        assert!((m.mean[0] - 1.0).abs() < 1e-15 && m.mean[1].abs() < 1e-15);
        assert!((m.covariance[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(m.covariance[(1, 1)] > 0.0 && m.covariance[(1, 1)] < 1e-6);
        assert!(m.regularized);
    }

    #[test]
    fn moments_repeated_particle() {
        let ps = vec![DVector::from_vec(vec![1.0, -2.0, 3.0]); 10];
        let m = equal_weight_moments(&ps).unwrap();
        assert!(m.regularized);
        assert!(m.covariance.iter().all(|x| x.abs() < 1e-6));
        assert!(m.cholesky_factor().diagonal().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn moments_gaussian_sample() {
        let mut rng = substream(6, &[0]);
        let ps: Vec<_> = (0..10_000)
            .map(|_| DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let m = equal_weight_moments(&ps).unwrap();
        assert!(!m.regularized);
        for i in 0..2 {
            assert!(m.mean[i].abs() < 0.05);
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((m.covariance[(i, j)] - target).abs() < 0.1);
            }
        }
    }

    #[test]
    fn mahalanobis_matches_inverse() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = WeightedMoments::from_mean_cov(DVector::zeros(2), cov.clone()).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let direct = (x.transpose() * cov.try_inverse().unwrap() * &x)[(0, 0)];
        assert!((m.mahalanobis_sq(&x) - direct).abs() < 1e-12);
    }

    #[test]
    fn non_finite_covariance_is_rejected() {
        let cov = DMatrix::from_element(2, 2, f64::NAN);
        assert_eq!(
            WeightedMoments::from_mean_cov(DVector::zeros(2), cov),
            Err(Error::CovarianceNotFactorizable)
        );
    }

    #[test]
    fn system_validates_dimensions() {
        let ps = vec![DVector::zeros(2), DVector::zeros(3)];
        assert!(matches!(ParticleSystem::new(ps), Err(Error::DimensionMismatch { .. })));
    }
}
