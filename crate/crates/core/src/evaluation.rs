//! Replication studies and their metrics: Rao-Blackwellised predictive
//! densities on a fixed grid, the variability of those densities across runs
//! (VPD), Table-1-style summaries, and Monte Carlo estimates of the expected
//! jumping-distance utility `g(h)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::DEFAULT_JITTER_SD;
use crate::amcmc::{amcmc_run, AmcmcConfig};
use crate::error::{Error, Result};
use crate::kernels::{mh_step, KernelKind, KernelSpec, MoveRecord};
use crate::particles::{Resampler, WeightedMoments};
use crate::rng::{derive_seed, substream, tag};
use crate::samplers::{run_smc_method, Method, RunConfig};
use crate::stats;
use crate::targets::{MixtureTarget, Ordering};

pub const GRID_POINTS: usize = 100;
pub const GRID_MIN: f64 = -2.5;
pub const GRID_MAX: f64 = 2.5;

/// The evaluation points `y^(i)`: 100 equi-spaced values on `[-2.5, 2.5]`.
pub fn grid_points() -> Vec<f64> {
    linspace(GRID_MIN, GRID_MAX, GRID_POINTS)
}

/// `steps` equi-spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveGrid {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl PredictiveGrid {
    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// How the final accepted and proposed particles are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictivePool {
    /// Equal weight on the `M` accepted and `M` proposed particles.
    #[default]
    Union,
    /// `alpha f(proposed) + (1 - alpha) f(previous)` per particle.
    AcceptanceWeighted,
}

/// Predictive density from the records of the last move step. `density(theta, y)` is `pi(y | theta)`.
pub fn predictive_density<F>(records: &[MoveRecord], density: F, pool: PredictivePool) -> PredictiveGrid
where
    F: Fn(&DVector<f64>, f64) -> f64 + Sync,
{
    let points = grid_points();
    let m = records.len() as f64;
    let values = points
        .par_iter()
        .map(|&y| match pool {
            PredictivePool::Union => {
                records
                    .iter()
                    .map(|r| density(&r.theta_next, y) + density(&r.theta_proposed, y))
                    .sum::<f64>()
                    / (2.0 * m)
            }
            PredictivePool::AcceptanceWeighted => {
                records
                    .iter()
                    .map(|r| r.acc_prob * density(&r.theta_proposed, y) + (1.0 - r.acc_prob) * density(&r.theta_prev, y))
                    .sum::<f64>()
                    / m
            }
        })
        .collect();
    PredictiveGrid { points, values }
}

/// Predictive density averaged over equally weighted samples (used for MCMC output).
pub fn predictive_from_samples<F>(samples: &[DVector<f64>], density: F) -> PredictiveGrid
where
    F: Fn(&DVector<f64>, f64) -> f64 + Sync,
{
    let points = grid_points();
    let n = samples.len() as f64;
    let values = points
        .par_iter()
        .map(|&y| samples.iter().map(|s| density(s, y)).sum::<f64>() / n)
        .collect();
    PredictiveGrid { points, values }
}

/// Mean over grid points of the across-run sample variance.
pub fn vpd(grids: &[PredictiveGrid]) -> Result<f64> {
    if grids.len() < 2 {
        return Err(Error::TooFewRuns(grids.len()));
    }
    let g = grids[0].values.len();
    if let Some(bad) = grids.iter().find(|x| x.values.len() != g) {
        return Err(Error::LengthMismatch {
            expected: g,
            found: bad.values.len(),
        });
    }
    let per_point: Vec<f64> = (0..g)
        .map(|i| stats::sample_variance(&grids.iter().map(|x| x.values[i]).collect::<Vec<_>>()))
        .collect();
    Ok(stats::mean(&per_point))
}

/// Jackknife standard error of [`vpd`] (needs at least three runs).
pub fn vpd_jackknife_se(grids: &[PredictiveGrid]) -> Result<f64> {
    let j = grids.len();
    if j < 3 {
        return Err(Error::TooFewRuns(j));
    }
    let loo: Vec<f64> = (0..j)
        .map(|k| {
            let rest: Vec<PredictiveGrid> = grids
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, g)| g.clone())
                .collect();
            vpd(&rest)
        })
        .collect::<Result<_>>()?;
    let m = stats::mean(&loo);
    let jf = j as f64;
    Ok(((jf - 1.0) / jf * loo.iter().map(|v| (v - m) * (v - m)).sum::<f64>()).sqrt())
}

/// Particle count used for an `r`-component mixture: 2000 for two components, 5000 beyond.
pub fn default_particles(components: usize) -> usize {
    if components <= 2 {
        2000
    } else {
        5000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub runs: usize,
    /// `None` picks [`default_particles`].
    pub particles: Option<usize>,
    pub seed: u64,
    pub a: f64,
    pub jitter_sd: f64,
    pub ess_threshold_fraction: f64,
    pub resampler: Resampler,
    pub predictive_pool: PredictivePool,
    /// Overrides the chain length of the AMCMC baseline (burn-in stays half).
    pub amcmc_iterations: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            runs: 20,
            particles: None,
            seed: 0,
            a: 0.0,
            jitter_sd: DEFAULT_JITTER_SD,
            ess_threshold_fraction: 0.5,
            resampler: Resampler::Residual,
            predictive_pool: PredictivePool::Union,
            amcmc_iterations: None,
        }
    }
}

/// What one run contributes to the study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub grid: PredictiveGrid,
    pub jd_mean: f64,
    pub acc_prob_mean: f64,
    pub acc_rate: f64,
    pub h_means: Vec<Option<f64>>,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub kernel_labels: Vec<String>,
    pub completed: usize,
    pub failed: usize,
    pub vpd: f64,
    pub vpd_se: f64,
    /// VPD divided by the smallest VPD among the particle methods.
    pub rel_vpd: f64,
    pub jd_mean: f64,
    pub jd_se: f64,
    pub acc_prob_mean: f64,
    pub acc_rate: f64,
    /// Mean over runs of the per-run mean scaling, for runs where the kernel survived.
    pub h_means: Vec<Option<f64>>,
    pub proportions: Vec<f64>,
    pub outcomes: Vec<RunOutcome>,
}

impl MethodSummary {
    pub fn proportion(&self, label: &str) -> Option<f64> {
        self.kernel_labels.iter().position(|l| l == label).map(|i| self.proportions[i])
    }

    pub fn h_mean(&self, label: &str) -> Option<f64> {
        self.kernel_labels.iter().position(|l| l == label).and_then(|i| self.h_means[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub dataset: usize,
    pub runs: usize,
    pub methods: Vec<MethodSummary>,
}

impl StudyResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// One row per method. Kernel columns cover every kernel used by any method.
    pub fn to_csv(&self) -> String {
        let mut labels: Vec<&str> = Vec::new();
        for s in &self.methods {
            for l in &s.kernel_labels {
                if !labels.contains(&l.as_str()) {
                    labels.push(l);
                }
            }
        }
        let mut out =
            String::from("dataset,method,runs,failed,vpd,vpd_se,rel_vpd,jd_mean,jd_se,acc_prob_mean,acc_rate");
        for l in &labels {
            write!(out, ",h_{l}").unwrap();
        }
        for l in &labels {
            write!(out, ",prop_{l}").unwrap();
        }
        out.push('\n');
        for s in &self.methods {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.dataset,
                s.method.label(),
                s.completed,
                s.failed,
                s.vpd,
                s.vpd_se,
                s.rel_vpd,
                s.jd_mean,
                s.jd_se,
                s.acc_prob_mean,
                s.acc_rate
            )
            .unwrap();
            for l in &labels {
                out.push(',');
                if let Some(h) = s.h_mean(l) {
                    write!(out, "{h}").unwrap();
                }
            }
            for l in &labels {
                out.push(',');
                if let Some(p) = s.proportion(l) {
                    write!(out, "{p}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Observation order for run `j`; shared by every method of a study.
pub fn shuffled_observations(observations: &[f64], seed: u64, run: usize) -> Vec<f64> {
    let mut y = observations.to_vec();
    y.shuffle(&mut substream(seed, &[tag::SHUFFLE, run as u64]));
    y
}

fn kernel_labels(method: Method) -> Vec<String> {
    match method.menu() {
        Some(menu) => menu.entries().iter().map(|e| e.label()).collect(),
        None => vec![format!("{}_{}", KernelKind::RandomWalk.label(), Ordering::ByMeans.label())],
    }
}

/// One run of `method` on `observations` from an `r`-component mixture.
pub fn run_once(
    method: Method,
    components: usize,
    observations: Vec<f64>,
    run_seed: u64,
    config: &StudyConfig,
) -> Result<RunOutcome> {
    let target = MixtureTarget::new(components, observations)?;
    let density = |theta: &DVector<f64>, y: f64| target.density(theta, y);
    if method == Method::Amcmc {
        let mut ac = AmcmcConfig::for_mixture(components, run_seed);
        if let Some(n) = config.amcmc_iterations {
            ac.iterations = n;
            ac.burn_in = n / 2;
        }
        let chain = amcmc_run(&target, &ac)?;
        return Ok(RunOutcome {
            grid: predictive_from_samples(&chain.samples, density),
            jd_mean: chain.summary.jd_mean,
            acc_prob_mean: chain.summary.acc_prob_mean,
            acc_rate: chain.summary.acc_rate,
            h_means: vec![Some(chain.summary.h)],
            proportions: vec![1.0],
        });
    }
    let rc = RunConfig {
        method,
        particles: config.particles.unwrap_or_else(|| default_particles(components)),
        ess_threshold_fraction: config.ess_threshold_fraction,
        seed: run_seed,
        a: config.a,
        jitter_sd: config.jitter_sd,
        resampler: config.resampler,
        ..RunConfig::default()
    };
    let trace = run_smc_method(&target, &rc)?;
    let last = trace
        .last_move()
        .ok_or_else(|| Error::InvalidConfig("run finished without a move step".into()))?;
    Ok(RunOutcome {
        grid: predictive_density(&trace.final_moves, density, config.predictive_pool),
        jd_mean: last.jd_mean,
        acc_prob_mean: last.acc_prob_mean,
        acc_rate: last.acc_rate,
        h_means: last.h_means.clone(),
        proportions: last.proportions.clone(),
    })
}

/// Runs every method `runs` times on reshuffled copies of `observations`.
/// Run `j` uses the same observation order and seed for every method. Failed
/// runs are counted and left out of the aggregates.
pub fn study(dataset: usize, components: usize, observations: &[f64], config: &StudyConfig) -> Result<StudyResult> {
    if config.runs < 2 {
        return Err(Error::TooFewRuns(config.runs));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    let mut summaries = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let results: Vec<Result<RunOutcome>> = (0..config.runs)
            .into_par_iter()
            .map(|j| {
                let y = shuffled_observations(observations, config.seed, j);
                run_once(method, components, y, derive_seed(config.seed, &[tag::RUN, j as u64]), config)
            })
            .collect();
        summaries.push(summarize(method, results)?);
    }
    let best = summaries
        .iter()
        .filter(|s| s.method.is_smc() && s.vpd.is_finite())
        .map(|s| s.vpd)
        .fold(f64::INFINITY, f64::min);
    for s in &mut summaries {
        s.rel_vpd = s.vpd / best;
    }
    Ok(StudyResult {
        dataset,
        runs: config.runs,
        methods: summaries,
    })
}

fn summarize(method: Method, results: Vec<Result<RunOutcome>>) -> Result<MethodSummary> {
    let labels = kernel_labels(method);
    let failed = results.iter().filter(|r| r.is_err()).count();
    let outcomes: Vec<RunOutcome> = results.into_iter().filter_map(|r| r.ok()).collect();
    let grids: Vec<PredictiveGrid> = outcomes.iter().map(|o| o.grid.clone()).collect();
    let (vpd_value, vpd_se) = match vpd(&grids) {
        Ok(v) => (v, vpd_jackknife_se(&grids).unwrap_or(f64::NAN)),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let n = outcomes.len();
    let jd: Vec<f64> = outcomes.iter().map(|o| o.jd_mean).collect();
    let avg = |f: &dyn Fn(&RunOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n as f64;
    let h_means = (0..labels.len())
        .map(|k| {
            let hs: Vec<f64> = outcomes.iter().filter_map(|o| o.h_means[k]).collect();
            (!hs.is_empty()).then(|| stats::mean(&hs))
        })
        .collect();
    let proportions = (0..labels.len()).map(|k| avg(&|o| o.proportions[k])).collect();
    Ok(MethodSummary {
        method,
        kernel_labels: labels,
        completed: n,
        failed,
        vpd: vpd_value,
        vpd_se,
        rel_vpd: f64::NAN,
        jd_mean: avg(&|o| o.jd_mean),
        jd_se: if n > 1 {
            (stats::sample_variance(&jd) / n as f64).sqrt()
        } else {
            f64::NAN
        },
        acc_prob_mean: avg(&|o| o.acc_prob_mean),
        acc_rate: avg(&|o| o.acc_rate),
        h_means,
        proportions,
        outcomes,
    })
}

/// Spearman correlation between mean jumping distance and VPD across the particle methods.
pub fn jd_vpd_spearman(result: &StudyResult) -> f64 {
    let (jd, v): (Vec<f64>, Vec<f64>) = result
        .methods
        .iter()
        .filter(|s| s.method.is_smc())
        .map(|s| (s.jd_mean, s.vpd))
        .unzip();
    stats::spearman(&jd, &v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPoint {
    pub h: f64,
    pub g: f64,
    pub se: f64,
}

/// Estimates `g(h) = E[Lambda~]` at each scaling by `n` independent pairs
/// `(theta ~ pi_t, theta~ ~ q_h(theta, .))`. `draw` produces exact draws from
/// `pi_t`; `moments` are the proposal's mean and covariance.
pub fn g_curve<D, F>(
    draw: D,
    log_target: F,
    moments: &WeightedMoments,
    kind: KernelKind,
    hs: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<GPoint>>
where
    D: Fn(&mut crate::rng::SimRng) -> DVector<f64> + Sync,
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    hs.par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let kernel = KernelSpec::new(kind, Ordering::None, h)?;
            let mut rng = substream(seed, &[tag::GCURVE, i as u64]);
            let mut vals = Vec::with_capacity(n);
            for _ in 0..n {
                let theta = draw(&mut rng);
                vals.push(mh_step(&theta, &log_target, &kernel, moments, &mut rng)?.lambda_tilde);
            }
            let se = if n > 1 {
                (stats::sample_variance(&vals) / n as f64).sqrt()
            } else {
                f64::NAN
            };
            Ok(GPoint {
                h,
                g: stats::mean(&vals),
                se,
            })
        })
        .collect()
}

/// [`g_curve`] for the `N(0, scale^2 I_d)` target with exact moments.
pub fn gaussian_g_curve(dim: usize, scale: f64, kind: KernelKind, hs: &[f64], n: usize, seed: u64) -> Result<Vec<GPoint>> {
    let moments = WeightedMoments::from_mean_cov(DVector::zeros(dim), DMatrix::identity(dim, dim) * (scale * scale))?;
    let draw = |rng: &mut crate::rng::SimRng| DVector::from_fn(dim, |_, _| { let z: f64 = StandardNormal.sample(rng); scale * z });
    let log_target = |x: &DVector<f64>| -0.5 * x.norm_squared() / (scale * scale);
    g_curve(draw, log_target, &moments, kind, hs, n, seed)
}

/// Grid point with the largest estimate.
pub fn argmax(points: &[GPoint]) -> Option<GPoint> {
    points.iter().copied().max_by(|a, b| a.g.total_cmp(&b.g))
}

/// True when the curve rises to its maximum and falls afterwards, allowing
/// reversals between neighbours of at most `k` combined standard errors.
pub fn is_unimodal_within(points: &[GPoint], k: f64) -> bool {
    let Some(top) = points.iter().enumerate().max_by(|a, b| a.1.g.total_cmp(&b.1.g)).map(|(i, _)| i) else {
        return true;
    };
    points.windows(2).enumerate().all(|(i, w)| {
        let tol = k * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        if i < top {
            w[1].g >= w[0].g - tol
        } else {
            w[1].g <= w[0].g + tol
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>) -> PredictiveGrid {
        PredictiveGrid {
            points: linspace(0.0, 1.0, values.len()),
            values,
        }
    }

    #[test]
    fn grid_is_fixed() {
        let p = grid_points();
        assert_eq!(p.len(), 100);
        assert_eq!(p[0], -2.5);
        assert_eq!(p[99], 2.5);
        assert!((p[1] - p[0] - 5.0 / 99.0).abs() < 1e-12);
    }

    #[test]
    fn vpd_examples() {
        let a = grid(vec![0.1, 0.2, 0.3]);
        assert_eq!(vpd(&[a.clone(), a.clone()]).unwrap(), 0.0);
        let b = grid(vec![0.4, 0.5, 0.6]);
        // two runs differing by c everywhere: c^2 / 2
        assert!((vpd(&[a.clone(), b.clone()]).unwrap() - 0.09 / 2.0).abs() < 1e-12);
        let c = grid(vec![0.0, 0.7, 0.1]);
        let v1 = vpd(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let v2 = vpd(&[c, a.clone(), b]).unwrap();
        assert!((v1 - v2).abs() < 1e-15);
        assert_eq!(vpd(&[a]), Err(Error::TooFewRuns(1)));
    }

    #[test]
    fn jackknife_of_identical_grids_is_zero() {
        let a = grid(vec![0.1, 0.2]);
        assert_eq!(vpd_jackknife_se(&[a.clone(), a.clone(), a]).unwrap(), 0.0);
    }

    #[test]
    fn identical_particles_give_their_density() {
        let theta = DVector::from_vec(vec![0.3, -1.0, -2.0, -0.5, 0.5]);
        let target = MixtureTarget::new(2, vec![0.0]).unwrap();
        let rec = MoveRecord {
            theta_prev: theta.clone(),
            theta_proposed: theta.clone(),
            theta_next: theta.clone(),
            acc_prob: 0.3,
            lambda: 0.0,
            lambda_tilde: 0.0,
            accepted: false,
        };
        let records = vec![rec; 4];
        for pool in [PredictivePool::Union, PredictivePool::AcceptanceWeighted] {
            let g = predictive_density(&records, |t, y| target.density(t, y), pool);
            for (y, v) in g.points.iter().zip(&g.values) {
                assert!((v - target.density(&theta, *y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unimodality() {
        let p = |h: f64, g: f64| GPoint { h, g, se: 0.01 };
        assert!(is_unimodal_within(&[p(0.0, 0.0), p(1.0, 1.0), p(2.0, 0.5)], 2.0));
        assert!(is_unimodal_within(&[p(0.0, 0.0), p(1.0, 1.0), p(2.0, 0.99), p(3.0, 1.0), p(4.0, 0.1)], 2.0));
        assert!(!is_unimodal_within(&[p(0.0, 1.0), p(1.0, 0.2), p(2.0, 0.9), p(3.0, 0.1)], 2.0));
    }

    #[test]
    fn g_vanishes_at_small_h() {
        let pts = gaussian_g_curve(5, 1.0, KernelKind::RandomWalk, &[1e-4], 2000, 1).unwrap();
        assert!(pts[0].g < 1e-6);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let y: Vec<f64> = (0..50).map(f64::from).collect();
        let mut s = shuffled_observations(&y, 3, 1);
        assert_ne!(s, y);
        s.sort_by(f64::total_cmp);
        assert_eq!(s, y);
        assert_eq!(shuffled_observations(&y, 3, 1), shuffled_observations(&y, 3, 1));
    }
}
