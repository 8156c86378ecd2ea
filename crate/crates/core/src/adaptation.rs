//! The population of (kernel, scaling) pairs attached to particles and its
//! update: reweight each pair by `a + Lambda~`, resample, jitter the
//! scaling, clamp, and shuffle back onto particles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec, MoveRecord};
use crate::particles::{multinomial_resample, normalize_log_weights};
use crate::targets::Ordering;

/// Floor imputed for scalings perturbed to or below zero.
pub const MIN_SCALING: f64 = 1e-6;
pub const DEFAULT_JITTER_SD: f64 = 0.015;

/// One selectable kernel with the support of its initial scaling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuEntry {
    pub kind: KernelKind,
    pub ordering: Ordering,
    pub h_lower: f64,
    pub h_upper: f64,
}

impl MenuEntry {
    /// Default initial bounds: `(0, 2)` for the random walk, `(0, 1)` for Liu/West.
    pub fn with_default_bounds(kind: KernelKind, ordering: Ordering) -> Self {
        let h_upper = match kind {
            KernelKind::RandomWalk => 2.0,
            KernelKind::LiuWest => 1.0,
        };
        Self {
            kind,
            ordering,
            h_lower: 0.0,
            h_upper,
        }
    }

    /// Short identifier such as `rw_means` used in CSV headers.
    pub fn label(&self) -> String {
        format!("{}_{}", self.kind.label(), self.ordering.label())
    }

    /// Keeps `h` inside the kernel's admissible domain.
    pub fn clamp(&self, h: f64) -> f64 {
        let h = if h < MIN_SCALING || h.is_nan() { MIN_SCALING } else { h };
        h.min(self.kind.max_scaling())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMenu {
    entries: Vec<MenuEntry>,
}

impl KernelMenu {
    pub fn new(entries: Vec<MenuEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyMenu);
        }
        for e in &entries {
            let valid = e.h_lower >= 0.0
                && e.h_lower <= e.h_upper
                && e.h_upper > 0.0
                && e.h_upper <= e.kind.max_scaling()
                && e.h_upper.is_finite();
            if !valid {
                return Err(Error::InvalidConfig(format!(
                    "invalid initial scaling bounds ({}, {}) for kernel {}",
                    e.h_lower,
                    e.h_upper,
                    e.label()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[MenuEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct orderings, sorted.
    pub fn orderings(&self) -> Vec<Ordering> {
        let mut o: Vec<Ordering> = self.entries.iter().map(|e| e.ordering).collect();
        o.sort();
        o.dedup();
        o
    }
}

/// Which per-move statistic feeds the score `a + statistic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatistic {
    #[default]
    LambdaTilde,
    Lambda,
}

/// `M` (kernel id, scaling) pairs, index-aligned with the particles.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningPopulation {
    pub kernel_ids: Vec<usize>,
    pub h: Vec<f64>,
    /// Scores from the most recent move step (empty before the first one).
    pub scores: Vec<f64>,
    pub jitter_sd: f64,
    pub a: f64,
}

impl TuningPopulation {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Kernel used by particle `j`.
    pub fn kernel_for(&self, menu: &KernelMenu, j: usize) -> KernelSpec {
        let e = menu.entries()[self.kernel_ids[j]];
        KernelSpec {
            kind: e.kind,
            ordering: e.ordering,
            h: self.h[j],
        }
    }

    /// Fraction of pairs using each menu entry.
    pub fn proportions(&self, menu: &KernelMenu) -> Vec<f64> {
        let mut counts = vec![0usize; menu.len()];
        self.kernel_ids.iter().for_each(|&k| counts[k] += 1);
        counts.into_iter().map(|c| c as f64 / self.len() as f64).collect()
    }

    /// Mean scaling per menu entry; `None` for entries with no pairs.
    pub fn h_means(&self, menu: &KernelMenu) -> Vec<Option<f64>> {
        let mut sums = vec![(0.0, 0usize); menu.len()];
        for (&k, &h) in self.kernel_ids.iter().zip(&self.h) {
            sums[k].0 += h;
            sums[k].1 += 1;
        }
        sums.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()
    }
}

/// Draws kernel ids uniformly over the menu and scalings uniformly within each kernel's bounds.
pub fn init_population<R: Rng + ?Sized>(
    menu: &KernelMenu,
    m: usize,
    jitter_sd: f64,
    a: f64,
    rng: &mut R,
) -> Result<TuningPopulation> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    let mut kernel_ids = Vec::with_capacity(m);
    let mut h = Vec::with_capacity(m);
    for _ in 0..m {
        let k = if menu.len() == 1 { 0 } else { rng.random_range(0..menu.len()) };
        let e = menu.entries()[k];
        let draw = if e.h_lower == e.h_upper {
            e.h_lower
        } else {
            rng.random_range(e.h_lower..e.h_upper)
        };
        kernel_ids.push(k);
        h.push(e.clamp(draw));
    }
    Ok(TuningPopulation {
        kernel_ids,
        h,
        scores: Vec::new(),
        jitter_sd,
        a,
    })
}

/// `a + statistic` for each move, aligned by particle index.
pub fn score(population: &TuningPopulation, records: &[MoveRecord], statistic: ScoreStatistic) -> Result<Vec<f64>> {
    if records.len() != population.len() {
        return Err(Error::LengthMismatch {
            expected: population.len(),
            found: records.len(),
        });
    }
    Ok(records
        .iter()
        .map(|r| {
            population.a
                + match statistic {
                    ScoreStatistic::LambdaTilde => r.lambda_tilde,
                    ScoreStatistic::Lambda => r.lambda,
                }
        })
        .collect())
}

/// Resampling weights proportional to the scores; uniform when every score is zero.
pub fn score_weights(scores: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = scores.iter().map(|&s| if s > 0.0 { s.ln() } else { f64::NEG_INFINITY }).collect();
    normalize_log_weights(&logs)
        .map(|(w, _)| w)
        .unwrap_or_else(|_| vec![1.0 / scores.len() as f64; scores.len()])
}

/// Samples `M` pairs from the score-weighted, jittered mixture over the
/// current pairs and allocates them to particles in random order.
pub fn update<R: Rng + ?Sized>(
    population: &TuningPopulation,
    menu: &KernelMenu,
    scores: &[f64],
    rng: &mut R,
) -> Result<TuningPopulation> {
    let m = population.len();
    if scores.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: scores.len(),
        });
    }
    let weights = score_weights(scores);
    let picks = multinomial_resample(&weights, m, rng);
    let noise = if population.jitter_sd > 0.0 {
        Some(Normal::new(0.0, population.jitter_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let mut pairs: Vec<(usize, f64)> = picks
        .into_iter()
        .map(|j| {
            let k = population.kernel_ids[j];
            let jitter = noise.as_ref().map_or(0.0, |n| n.sample(rng));
            (k, menu.entries()[k].clamp(population.h[j] + jitter))
        })
        .collect();
    pairs.shuffle(rng);
    let (kernel_ids, h) = pairs.into_iter().unzip();
    Ok(TuningPopulation {
        kernel_ids,
        h,
        scores: scores.to_vec(),
        jitter_sd: population.jitter_sd,
        a: population.a,
    })
}

/// Pairs stay attached to their particles across iterations without a move.
pub fn freeze_on_no_move(population: TuningPopulation) -> TuningPopulation {
    population
}
