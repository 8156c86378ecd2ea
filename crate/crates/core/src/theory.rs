//! Executable checks of the results on how reweighting by `a + Lambda`
//! reshapes the scaling distribution: the reweight-resample limit, the
//! covariance improvement criterion, and concentration of the product
//! `pi(h) prod_s (a + g_s(h))` at the maximizer of `g`.

use std::fmt;

use rand::Rng;

use crate::adaptation::{self, KernelMenu, MenuEntry, TuningPopulation};
use crate::error::Result;
use crate::evaluation::linspace;
use crate::kernels::KernelKind;
use crate::particles::multinomial_resample;
use crate::rng::substream;
use crate::stats;
use crate::targets::Ordering;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Report {
    pub m: usize,
    pub ks: f64,
    pub threshold: f64,
}

impl Prop1Report {
    pub fn passed(&self) -> bool {
        self.ks < self.threshold
    }
}

impl fmt::Display for Prop1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} prop1: M={} KS={:.5} (threshold {})",
            verdict(self.passed()),
            self.m,
            self.ks,
            self.threshold
        )
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Scalings uniform on (0, 1) receive noisy scores with conditional mean
/// `w(h) = h`; after one population update (no jitter) their distribution
/// should be `2h`, i.e. CDF `x^2`.
pub fn prop1(m: usize, seed: u64) -> Result<Prop1Report> {
    let mut rng = substream(seed, &[1]);
    let menu = KernelMenu::new(vec![MenuEntry {
        kind: KernelKind::RandomWalk,
        ordering: Ordering::None,
        h_lower: 0.0,
        h_upper: 1.0,
    }])?;
    let pop = adaptation::init_population(&menu, m, 0.0, 0.0, &mut rng)?;
    let scores: Vec<f64> = pop.h.iter().map(|&h| h * (0.5 + rng.random::<f64>())).collect();
    let next: TuningPopulation = adaptation::update(&pop, &menu, &scores, &mut rng)?;
    Ok(Prop1Report {
        m,
        ks: stats::ks_statistic(&next.h, |x| x.clamp(0.0, 1.0).powi(2)),
        threshold: 0.01,
    })
}

/// Change in `E[g]` produced by one reweight-resample step under `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    /// `cov_pi(g, w)` by quadrature.
    pub covariance: f64,
    /// `E_{pi*}[g] - E_pi[g] = cov(g, w) / E[w]` by quadrature.
    pub exact_gain: f64,
    /// Monte Carlo estimate of the same gain and its standard error.
    pub mc_gain: f64,
    pub se: f64,
}

impl Lemma1Report {
    /// The improvement holds within 3 SE when the covariance is non-negative,
    /// and reverses (gain below zero within 3 SE) when it is negative.
    pub fn consistent(&self) -> bool {
        if self.covariance >= 0.0 {
            self.mc_gain >= -3.0 * self.se
        } else {
            self.mc_gain <= 3.0 * self.se
        }
    }
}

impl fmt::Display for Lemma1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} lemma1: cov={:.5} exact_gain={:.5} mc_gain={:.5} se={:.5}",
            verdict(self.consistent()),
            self.covariance,
            self.exact_gain,
            self.mc_gain,
            self.se
        )
    }
}

/// Checks the covariance criterion for `h ~ U(lo, hi)` with objective `g` and
/// weighting `w`, using `reps` independent resampling experiments of size `m`.
pub fn lemma1<G, W>(g: G, w: W, lo: f64, hi: f64, m: usize, reps: usize, seed: u64) -> Lemma1Report
where
    G: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    // midpoint rule on a fine grid
    let k = 20_000;
    let hs: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / k as f64).collect();
    let eg = hs.iter().map(|&h| g(h)).sum::<f64>() / k as f64;
    let ew = hs.iter().map(|&h| w(h)).sum::<f64>() / k as f64;
    let egw = hs.iter().map(|&h| g(h) * w(h)).sum::<f64>() / k as f64;
    let covariance = egw - eg * ew;

    let gains: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = substream(seed, &[2, r as u64]);
            let draws: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
            let weights: Vec<f64> = draws.iter().map(|&h| w(h)).collect();
            let total: f64 = weights.iter().sum();
            let normalized: Vec<f64> = weights.iter().map(|x| x / total).collect();
            let picks = multinomial_resample(&normalized, m, &mut rng);
            let before = draws.iter().map(|&h| g(h)).sum::<f64>() / m as f64;
            let after = picks.iter().map(|&j| g(draws[j])).sum::<f64>() / m as f64;
            after - before
        })
        .collect();
    Lemma1Report {
        covariance,
        exact_gain: covariance / ew,
        mc_gain: stats::mean(&gains),
        se: (stats::sample_variance(&gains) / reps as f64).sqrt(),
    }
}

/// Default objective for the concentration check: a sharp bump at 1.06.
pub fn default_thm1_g(h: f64) -> f64 {
    5.0 * (-(h - 1.06).powi(2) / (2.0 * 0.25 * 0.25)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm1Report {
    pub argmax: f64,
    pub half_width: f64,
    /// Mass within `half_width` of the argmax after each of `t = 1..=steps` updates.
    pub mass: Vec<f64>,
    pub target_mass: f64,
}

impl Thm1Report {
    pub fn final_mass(&self) -> f64 {
        self.mass.last().copied().unwrap_or(0.0)
    }

    /// First step at which the mass reaches the target.
    pub fn hitting_step(&self) -> Option<usize> {
        self.mass.iter().position(|&m| m >= self.target_mass).map(|i| i + 1)
    }

    pub fn passed(&self) -> bool {
        self.final_mass() >= self.target_mass
    }
}

impl fmt::Display for Thm1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} thm1: argmax={:.4} mass(+-{})={:.5} at t={} (first reached {} at t={})",
            verdict(self.passed()),
            self.argmax,
            self.half_width,
            self.final_mass(),
            self.mass.len(),
            self.target_mass,
            self.hitting_step().map_or_else(|| "never".to_string(), |t| t.to_string())
        )
    }
}

/// Evolves `pi_t(h) ∝ pi(h) prod_{s<=t} (a + g(h))` for a uniform `pi` on a
/// `points`-point grid over `[lo, hi]` and tracks the mass near `argmax g`.
pub fn thm1<G: Fn(f64) -> f64>(g: G, a: f64, lo: f64, hi: f64, points: usize, steps: usize) -> Thm1Report {
    let hs = linspace(lo, hi, points);
    let gv: Vec<f64> = hs.iter().map(|&h| g(h)).collect();
    let top = gv
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map_or(0, |(i, _)| i);
    let argmax = hs[top];
    let half_width = 0.05;
    let inc: Vec<f64> = gv.iter().map(|&x| (a + x).ln()).collect();
    let mut logp = vec![0.0; points];
    let mut mass = Vec::with_capacity(steps);
    for _ in 0..steps {
        for (l, d) in logp.iter_mut().zip(&inc) {
            *l += d;
        }
        let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logp.iter().map(|l| (l - mx).exp()).collect();
        let total: f64 = p.iter().sum();
        let near: f64 = hs
            .iter()
            .zip(&p)
            .filter(|(h, _)| (**h - argmax).abs() <= half_width)
            .map(|(_, x)| x)
            .sum();
        mass.push(near / total);
    }
    Thm1Report {
        argmax,
        half_width,
        mass,
        target_mass: 0.99,
    }
}
