//! IBIS and adaptive SMC over data-tempered targets.
//!
//! Both samplers share one engine: reweight by the next observation, and when
//! the ESS falls below `ess_threshold_fraction * M` (or on the last
//! observation with `force_final_move`) resample, compute moments under each
//! ordering in use, and move every particle once. The adaptive sampler then
//! scores its (kernel, scaling) pairs and redraws them.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{self, KernelMenu, MenuEntry, ScoreStatistic, TuningPopulation, DEFAULT_JITTER_SD};
use crate::error::{Error, Result};
use crate::kernels::{mh_step_from, reference_rw_scaling, KernelKind, KernelSpec, MoveRecord};
use crate::particles::{equal_weight_moments, ess, normalize_log_weights, ParticleSystem, Resampler, WeightedMoments};
use crate::rng::{substream, tag};
use crate::targets::{Ordering, SequentialTarget};

/// The samplers compared in the mixture experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    RwFixed,
    RwAdaptive,
    LwMean,
    LwVariance,
    Kmix,
    Amcmc,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::RwFixed,
        Method::RwAdaptive,
        Method::LwMean,
        Method::LwVariance,
        Method::Kmix,
        Method::Amcmc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::RwFixed => "RWfixed",
            Method::RwAdaptive => "RWadaptive",
            Method::LwMean => "LWmean",
            Method::LwVariance => "LWvariance",
            Method::Kmix => "Kmix",
            Method::Amcmc => "AMCMC",
        }
    }

    /// True for the particle methods (everything but the MCMC baseline).
    pub fn is_smc(self) -> bool {
        self != Method::Amcmc
    }

    /// Kernel menu of an adaptive method; `None` for RWfixed and AMCMC.
    pub fn menu(self) -> Option<KernelMenu> {
        let rw_m = MenuEntry::with_default_bounds(KernelKind::RandomWalk, Ordering::ByMeans);
        let lw_m = MenuEntry::with_default_bounds(KernelKind::LiuWest, Ordering::ByMeans);
        let lw_v = MenuEntry::with_default_bounds(KernelKind::LiuWest, Ordering::ByVariances);
        let entries = match self {
            Method::RwAdaptive => vec![rw_m],
            Method::LwMean => vec![lw_m],
            Method::LwVariance => vec![lw_v],
            Method::Kmix => vec![rw_m, lw_m, lw_v],
            Method::RwFixed | Method::Amcmc => return None,
        };
        Some(KernelMenu::new(entries).expect("built-in menus are valid"))
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.trim().chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_lowercase();
        match key.as_str() {
            "rwfixed" => Ok(Method::RwFixed),
            "rwadaptive" => Ok(Method::RwAdaptive),
            "lwmean" | "lwmeans" => Ok(Method::LwMean),
            "lwvariance" | "lwvariances" => Ok(Method::LwVariance),
            "kmix" => Ok(Method::Kmix),
            "amcmc" => Ok(Method::Amcmc),
            _ => Err(Error::InvalidConfig(format!("unknown method '{}'", s.trim()))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label().to_string()
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Parses a comma-separated method list such as `kmix,lwmean`. Duplicates are dropped.
pub fn parse_method_list(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty method list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub particles: usize,
    pub ess_threshold_fraction: f64,
    pub seed: u64,
    /// Offset `a` of the linear score `a + Lambda~`.
    pub a: f64,
    pub jitter_sd: f64,
    pub resampler: Resampler,
    pub force_final_move: bool,
    pub shuffle_observations: bool,
    pub moves_per_step: usize,
    pub score_statistic: ScoreStatistic,
    /// Keep per-move population snapshots in the trace.
    pub record_population: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Kmix,
            particles: 2000,
            ess_threshold_fraction: 0.5,
            seed: 0,
            a: 0.0,
            jitter_sd: DEFAULT_JITTER_SD,
            resampler: Resampler::Residual,
            force_final_move: true,
            shuffle_observations: false,
            moves_per_step: 1,
            score_statistic: ScoreStatistic::LambdaTilde,
            record_population: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ess_threshold_fraction > 0.0 && self.ess_threshold_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ess threshold fraction must be in (0, 1], got {}",
                self.ess_threshold_fraction
            )));
        }
        if self.particles == 0 {
            return Err(Error::InvalidConfig("particle count must be positive".into()));
        }
        if self.moves_per_step == 0 {
            return Err(Error::InvalidConfig("moves per step must be positive".into()));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidConfig(format!("score offset must be non-negative, got {}", self.a)));
        }
        if !(self.jitter_sd >= 0.0 && self.jitter_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!("jitter sd must be non-negative, got {}", self.jitter_sd)));
        }
        Ok(())
    }
}

/// Statistics of one resample-move step.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveSummary {
    pub step: usize,
    pub acc_prob_mean: f64,
    pub acc_rate: f64,
    /// Mean of `Lambda~`, the acceptance-weighted squared jumping distance.
    pub jd_mean: f64,
    pub lambda_mean: f64,
    /// Mean scaling per kernel after the step (the scalings the next move will use).
    pub h_means: Vec<Option<f64>>,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// ESS after reweighting by observation `iter`.
    pub ess: f64,
    pub resampled: bool,
    pub moves: Option<MoveSummary>,
}

/// One line of the population log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRow {
    pub step: usize,
    pub particle_index: usize,
    pub kernel_id: usize,
    pub h: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub kernel_labels: Vec<String>,
    pub iterations: Vec<IterationRecord>,
    pub final_particles: ParticleSystem,
    pub final_population: Option<TuningPopulation>,
    /// Records of the last move step (the forced final one by default).
    pub final_moves: Vec<MoveRecord>,
    pub population_log: Vec<PopulationRow>,
}

impl RunTrace {
    pub fn move_steps(&self) -> impl Iterator<Item = &MoveSummary> {
        self.iterations.iter().filter_map(|i| i.moves.as_ref())
    }

    pub fn last_move(&self) -> Option<&MoveSummary> {
        self.move_steps().last()
    }

    /// Trace CSV: `iter,ess,resampled,acc_prob_mean,acc_rate,jd_mean`, then
    /// `h_mean_<kernel>` and `prop_<kernel>` per kernel. Move columns are empty
    /// on iterations without a move.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,ess,resampled,acc_prob_mean,acc_rate,jd_mean");
        for l in &self.kernel_labels {
            write!(out, ",h_mean_{l}").unwrap();
        }
        for l in &self.kernel_labels {
            write!(out, ",prop_{l}").unwrap();
        }
        out.push('\n');
        for it in &self.iterations {
            write!(out, "{},{},{}", it.iter, it.ess, it.resampled as u8).unwrap();
            match &it.moves {
                Some(m) => {
                    write!(out, ",{},{},{}", m.acc_prob_mean, m.acc_rate, m.jd_mean).unwrap();
                    for h in &m.h_means {
                        out.push(',');
                        if let Some(h) = h {
                            write!(out, "{h}").unwrap();
                        }
                    }
                    for p in &m.proportions {
                        write!(out, ",{p}").unwrap();
                    }
                }
                None => out.push_str(&",".repeat(3 + 2 * self.kernel_labels.len())),
            }
            out.push('\n');
        }
        out
    }

    /// Population log CSV: `step,particle_index,kernel_id,h,score`.
    pub fn population_csv(&self) -> String {
        let mut out = String::from("step,particle_index,kernel_id,h,score\n");
        for r in &self.population_log {
            writeln!(out, "{},{},{},{},{}", r.step, r.particle_index, r.kernel_id, r.h, r.score).unwrap();
        }
        out
    }
}

enum Kernels<'a> {
    Fixed(KernelSpec),
    Adaptive {
        menu: &'a KernelMenu,
        population: TuningPopulation,
    },
}

impl Kernels<'_> {
    fn labels(&self) -> Vec<String> {
        match self {
            Kernels::Fixed(k) => vec![format!("{}_{}", k.kind.label(), k.ordering.label())],
            Kernels::Adaptive { menu, .. } => menu.entries().iter().map(MenuEntry::label).collect(),
        }
    }

    fn orderings(&self) -> Vec<Ordering> {
        match self {
            Kernels::Fixed(k) => vec![k.ordering],
            Kernels::Adaptive { menu, .. } => menu.orderings(),
        }
    }

    fn kernel_for(&self, j: usize) -> KernelSpec {
        match self {
            Kernels::Fixed(k) => *k,
            Kernels::Adaptive { menu, population } => population.kernel_for(menu, j),
        }
    }

    fn h_means_and_proportions(&self) -> (Vec<Option<f64>>, Vec<f64>) {
        match self {
            Kernels::Fixed(k) => (vec![Some(k.h)], vec![1.0]),
            Kernels::Adaptive { menu, population } => (population.h_means(menu), population.proportions(menu)),
        }
    }
}

/// Chopin's IBIS with one fixed kernel.
pub fn ibis_run<T: SequentialTarget + Sync>(target: &T, kernel: KernelSpec, config: &RunConfig) -> Result<RunTrace> {
    KernelSpec::new(kernel.kind, kernel.ordering, kernel.h)?;
    run_engine(target, Kernels::Fixed(kernel), config)
}

/// Adaptive SMC choosing kernels and scalings from `menu`.
pub fn asmc_run<T: SequentialTarget + Sync>(target: &T, menu: &KernelMenu, config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let mut rng = substream(config.seed, &[tag::TUNING]);
    let population = adaptation::init_population(menu, config.particles, config.jitter_sd, config.a, &mut rng)?;
    run_engine(target, Kernels::Adaptive { menu, population }, config)
}

/// Runs an SMC method by name. RWfixed uses the random walk ordered by
/// means with scaling `2.38 / sqrt(d)`.
pub fn run_smc_method<T: SequentialTarget + Sync>(target: &T, config: &RunConfig) -> Result<RunTrace> {
    match config.method {
        Method::RwFixed => {
            let k = KernelSpec::new(KernelKind::RandomWalk, Ordering::ByMeans, reference_rw_scaling(target.dim()))?;
            ibis_run(target, k, config)
        }
        Method::Amcmc => Err(Error::InvalidConfig("AMCMC is not a particle method".into())),
        m => asmc_run(target, &m.menu().expect("adaptive method"), config),
    }
}

fn run_engine<T: SequentialTarget + Sync>(target: &T, mut kernels: Kernels<'_>, config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let m = config.particles;
    let n = target.n_obs();
    let mut particle_rng = substream(config.seed, &[tag::PARTICLES]);
    let mut tuning_rng = substream(config.seed, &[tag::TUNING, 1]);

    let initial: Vec<DVector<f64>> = (0..m).map(|_| target.sample_prior(&mut particle_rng)).collect();
    let mut system = ParticleSystem::new(initial)?;
    let threshold = config.ess_threshold_fraction * m as f64;
    let labels = kernels.labels();
    let mut iterations = Vec::with_capacity(n);
    let mut final_moves = Vec::new();
    let mut population_log = Vec::new();
    let mut step = 0usize;

    for t in 1..=n {
        let increments: Vec<f64> = system
            .particles()
            .par_iter()
            .map(|p| {
                let inc = target.log_lik_increment(p, t);
                if inc.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    inc
                }
            })
            .collect();
        for (lw, inc) in system.log_weights_mut().iter_mut().zip(increments) {
            *lw += inc;
        }
        let (weights, _) = normalize_log_weights(system.log_weights())?;
        let current_ess = ess(&weights);
        let resample = current_ess < threshold || (config.force_final_move && t == n);
        if !resample {
            iterations.push(IterationRecord {
                iter: t,
                ess: current_ess,
                resampled: false,
                moves: None,
            });
            continue;
        }

        let indices = config.resampler.resample(&weights, m, &mut particle_rng);
        let resampled = system.select(&indices);
        let records = move_particles(target, &kernels, resampled.particles(), t, step, config)?;

        if let Kernels::Adaptive { menu, population } = &mut kernels {
            let scores = adaptation::score(population, &records, config.score_statistic)?;
            if config.record_population {
                population_log.extend((0..m).map(|j| PopulationRow {
                    step,
                    particle_index: j,
                    kernel_id: population.kernel_ids[j],
                    h: population.h[j],
                    score: scores[j],
                }));
            }
            *population = adaptation::update(population, menu, &scores, &mut tuning_rng)?;
        }

        let (h_means, proportions) = kernels.h_means_and_proportions();
        let mf = m as f64;
        let summary = MoveSummary {
            step,
            acc_prob_mean: records.iter().map(|r| r.acc_prob).sum::<f64>() / mf,
            acc_rate: records.iter().filter(|r| r.accepted).count() as f64 / mf,
            jd_mean: records.iter().map(|r| r.lambda_tilde).sum::<f64>() / mf,
            lambda_mean: records.iter().map(|r| r.lambda).sum::<f64>() / mf,
            h_means,
            proportions,
        };
        system = ParticleSystem::new(records.iter().map(|r| r.theta_next.clone()).collect())?;
        final_moves = records;
        iterations.push(IterationRecord {
            iter: t,
            ess: current_ess,
            resampled: true,
            moves: Some(summary),
        });
        step += 1;
    }

    let final_population = match kernels {
        Kernels::Adaptive { population, .. } => Some(population),
        Kernels::Fixed(_) => None,
    };
    Ok(RunTrace {
        kernel_labels: labels,
        iterations,
        final_particles: system,
        final_population,
        final_moves,
        population_log,
    })
}

/// Moves every (equally weighted) particle with its kernel. Moments are
/// computed once per ordering from the pre-move particles under that ordering.
fn move_particles<T: SequentialTarget + Sync>(
    target: &T,
    kernels: &Kernels<'_>,
    particles: &[DVector<f64>],
    t: usize,
    step: usize,
    config: &RunConfig,
) -> Result<Vec<MoveRecord>> {
    let orderings = kernels.orderings();
    let relabelled: Vec<Vec<DVector<f64>>> = orderings
        .iter()
        .map(|&o| particles.par_iter().map(|p| target.relabel(p, o)).collect())
        .collect();
    let moments: Vec<WeightedMoments> = relabelled.iter().map(|ps| equal_weight_moments(ps)).collect::<Result<_>>()?;
    let log_target = |x: &DVector<f64>| target.log_posterior_upto(x, t);

    (0..particles.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(config.seed, &[tag::MOVES, step as u64, j as u64]);
            let kernel = kernels.kernel_for(j);
            let oi = orderings.iter().position(|&o| o == kernel.ordering).expect("ordering in menu");
            let mut theta = relabelled[oi][j].clone();
            let mut lp = log_target(&theta);
            if !lp.is_finite() {
                return Err(Error::TargetEvaluationFailure);
            }
            let mut last = None;
            for _ in 0..config.moves_per_step {
                let (rec, next_lp) = mh_step_from(&theta, lp, log_target, &kernel, &moments[oi], &mut rng)?;
                theta = rec.theta_next.clone();
                lp = next_lp;
                last = Some(rec);
            }
            Ok(last.expect("at least one move"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("lw-mean".parse::<Method>().unwrap(), Method::LwMean);
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn method_list() {
        assert_eq!(
            parse_method_list("kmix, LWmean,kmix").unwrap(),
            vec![Method::Kmix, Method::LwMean]
        );
        assert!(parse_method_list(" , ").is_err());
    }

    #[test]
    fn menus_match_methods() {
        let k = Method::Kmix.menu().unwrap();
        let labels: Vec<_> = k.entries().iter().map(|e| e.label()).collect();
        assert_eq!(labels, ["rw_means", "lw_means", "lw_variances"]);
        assert!(Method::RwFixed.menu().is_none());
        assert_eq!(Method::LwVariance.menu().unwrap().entries()[0].ordering, Ordering::ByVariances);
    }

    #[test]
    fn config_validation() {
        let bad = RunConfig {
            ess_threshold_fraction: 0.0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
