use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use asmc::adaptation::{KernelMenu, ScoreStatistic};
use asmc::amcmc::{amcmc_run, default_iterations, AmcmcConfig};
use asmc::config::{parse_config, parse_setting, ConfigFile};
use asmc::evaluation::{self, gaussian_g_curve, linspace, PredictivePool, StudyConfig};
use asmc::io::{format_dataset, parse_dataset, particles_csv};
use asmc::kernels::{reference_rw_scaling, KernelKind};
use asmc::particles::Resampler;
use asmc::rng::{substream, tag};
use asmc::samplers::{asmc_run, parse_method_list, run_smc_method, Method, RunConfig, RunTrace};
use asmc::targets::{dataset_components, simulate_dataset, GaussianMeanTarget, MixtureTarget, Ordering, SequentialTarget};
use asmc::theory;

/// Adaptive SMC sampler, its baselines and the mixture experiments.
///
/// Settings are resolved in the order: command-line flag, `--config` file,
/// environment (`ASMC_SEED` for the seed), built-in default.
#[derive(Parser)]
#[command(name = "asmc", version)]
struct Cli {
    /// JSON file whose keys mirror the flags (`--jitter-sd` is `jitter_sd`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw observations from one of the benchmark mixtures
    Simulate(SimulateArgs),
    /// Run one sampler and write its trace
    Run(RunArgs),
    /// Replicate several samplers on reshuffled data and tabulate VPD and summaries
    Study(StudyArgs),
    /// Estimate the expected jumping distance g(h) over a grid of scalings
    Gcurve(GcurveArgs),
    /// Run the checks of the scaling-adaptation theory
    Oracle(OracleArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Benchmark dataset (1-6)
    #[arg(long)]
    dataset: Option<usize>,
    /// Observation file (one number per line) instead of simulated data
    #[arg(long)]
    data: Option<PathBuf>,
    /// Mixture components to fit when reading `--data`
    #[arg(long)]
    components: Option<usize>,
    /// Number of simulated observations [default: 100]
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuningArgs {
    #[arg(long)]
    particles: Option<usize>,
    /// Resample when ESS < fraction * particles [default: 0.5]
    #[arg(long)]
    ess_threshold_fraction: Option<f64>,
    /// Score offset in `a + Lambda~` [default: 0]
    #[arg(long)]
    a: Option<f64>,
    /// Standard deviation of the noise added to resampled scalings [default: 0.015]
    #[arg(long)]
    jitter_sd: Option<f64>,
    /// residual | multinomial [default: residual]
    #[arg(long, value_parser = parse_setting::<Resampler>)]
    resampler: Option<Resampler>,
    /// Chain length of the AMCMC baseline
    #[arg(long)]
    amcmc_iterations: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// rwfixed | rwadaptive | lwmean | lwvariance | kmix | amcmc [default: kmix]
    #[arg(long, value_parser = parse_setting::<Method>)]
    method: Option<Method>,
    /// mixture | gaussian5 [default: mixture]
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Move every particle at the last observation [default: true]
    #[arg(long)]
    force_final_move: Option<bool>,
    /// Randomize the observation order [default: false]
    #[arg(long)]
    shuffle_observations: Option<bool>,
    /// MH transitions per resample-move step [default: 1]
    #[arg(long)]
    moves_per_step: Option<usize>,
    /// lambda_tilde | lambda [default: lambda_tilde]
    #[arg(long, value_parser = parse_setting::<ScoreStatistic>)]
    score_statistic: Option<ScoreStatistic>,
    /// Lower bound of the initial uniform scalings (all kernels)
    #[arg(long)]
    h_lower: Option<f64>,
    /// Upper bound of the initial uniform scalings (all kernels)
    #[arg(long)]
    h_upper: Option<f64>,
    /// Trace CSV (stdout when omitted)
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    final_particles: Option<PathBuf>,
    /// Per-move (kernel, h, score) snapshots
    #[arg(long)]
    population_log: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Comma-separated methods [default: all]
    #[arg(long)]
    methods: Option<String>,
    /// Replications per method [default: 20]
    #[arg(long)]
    runs: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// union | acceptance_weighted [default: union]
    #[arg(long, value_parser = parse_setting::<PredictivePool>)]
    predictive_pool: Option<PredictivePool>,
    /// Table CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GcurveArgs {
    /// gaussian<d>, a standard normal target in d dimensions [default: gaussian5]
    #[arg(long)]
    target: Option<String>,
    /// rw | lw [default: rw]
    #[arg(long, value_parser = parse_setting::<KernelKind>)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    hmin: Option<f64>,
    #[arg(long)]
    hmax: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Draws per grid point [default: 100000]
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Oracle {
    Prop1,
    Lemma1,
    Thm1,
    All,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    which: Oracle,
    /// Population size for prop1 [default: 100000]
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

struct Settings {
    file: ConfigFile,
    env_seed: Option<u64>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_config(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let env_seed = match std::env::var("ASMC_SEED") {
            Ok(s) => Some(s.trim().parse().with_context(|| format!("ASMC_SEED is not an integer: '{s}'"))?),
            Err(_) => None,
        };
        Ok(Self { file, env_seed })
    }

    fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.file.seed).or(self.env_seed).unwrap_or(0)
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Observations plus the dataset id (0 for a file) and component count.
fn load_mixture(args: &DataArgs, s: &Settings, seed: u64) -> Result<(usize, usize, Vec<f64>)> {
    let dataset = args.dataset.or(s.file.dataset);
    let components = args.components.or(s.file.components);
    if let Some(path) = args.data.as_ref().or(s.file.data.as_ref()) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let y = parse_dataset(&text).with_context(|| format!("parsing {}", path.display()))?;
        let r = match (components, dataset) {
            (Some(r), _) => r,
            (None, Some(k)) => dataset_components(k)?,
            (None, None) => bail!("--components (or --dataset) is required with --data"),
        };
        return Ok((dataset.unwrap_or(0), r, y));
    }
    let Some(k) = dataset else {
        bail!("either --dataset or --data is required");
    };
    let n = args.n.or(s.file.n).unwrap_or(100);
    let y = simulate_dataset(k, n, &mut substream(seed, &[tag::DATA]))?;
    Ok((k, components.unwrap_or(dataset_components(k)?), y))
}

fn simulate(args: SimulateArgs, s: &Settings) -> Result<()> {
    let seed = s.seed(args.data.seed);
    let (_, _, y) = load_mixture(&args.data, s, seed)?;
    write_out(args.out.as_deref().or(s.file.out.as_deref()), &format_dataset(&y))
}

fn menu_with_bounds(method: Method, lo: Option<f64>, hi: Option<f64>) -> Result<KernelMenu> {
    let menu = method.menu().expect("adaptive method");
    if lo.is_none() && hi.is_none() {
        return Ok(menu);
    }
    let entries = menu
        .entries()
        .iter()
        .map(|e| {
            let mut e = *e;
            e.h_lower = lo.unwrap_or(e.h_lower);
            e.h_upper = hi.unwrap_or(e.h_upper);
            e
        })
        .collect();
    Ok(KernelMenu::new(entries)?)
}

fn run_particles<T: SequentialTarget + Sync>(target: &T, args: &RunArgs, s: &Settings, cfg: &RunConfig) -> Result<()> {
    let lo = args.h_lower.or(s.file.h_lower);
    let hi = args.h_upper.or(s.file.h_upper);
    let trace: RunTrace = if cfg.method == Method::RwFixed || (lo.is_none() && hi.is_none()) {
        run_smc_method(target, cfg)?
    } else {
        asmc_run(target, &menu_with_bounds(cfg.method, lo, hi)?, cfg)?
    };
    write_out(args.trace.as_deref().or(s.file.trace.as_deref()), &trace.to_csv())?;
    if let Some(p) = args.final_particles.as_deref().or(s.file.final_particles.as_deref()) {
        write_out(Some(p), &particles_csv(trace.final_particles.particles()))?;
    }
    if let Some(p) = args.population_log.as_deref().or(s.file.population_log.as_deref()) {
        write_out(Some(p), &trace.population_csv())?;
    }
    Ok(())
}

fn run_chain<T: SequentialTarget>(target: &T, mut ac: AmcmcConfig, args: &RunArgs, s: &Settings) -> Result<()> {
    if let Some(n) = args.tuning.amcmc_iterations.or(s.file.amcmc_iterations) {
        ac.iterations = n;
        ac.burn_in = n / 2;
    }
    let chain = amcmc_run(target, &ac)?;
    let sm = chain.summary;
    let text = format!(
        "acc_rate,acc_prob_mean,jd_mean,h\n{},{},{},{}\n",
        sm.acc_rate, sm.acc_prob_mean, sm.jd_mean, sm.h
    );
    write_out(args.trace.as_deref().or(s.file.trace.as_deref()), &text)?;
    if let Some(p) = args.final_particles.as_deref().or(s.file.final_particles.as_deref()) {
        write_out(Some(p), &particles_csv(&chain.samples))?;
    }
    Ok(())
}

fn run(args: RunArgs, s: &Settings) -> Result<()> {
    let f = &s.file;
    let seed = s.seed(args.data.seed);
    let method = args.method.or(f.method).unwrap_or(Method::Kmix);
    let target_name = args.target.clone().or(f.target.clone()).unwrap_or_else(|| "mixture".into());
    let shuffle = args.shuffle_observations.or(f.shuffle_observations).unwrap_or(false);
    let mut cfg = RunConfig {
        method,
        seed,
        force_final_move: args.force_final_move.or(f.force_final_move).unwrap_or(true),
        shuffle_observations: shuffle,
        record_population: args.population_log.is_some() || f.population_log.is_some(),
        ..RunConfig::default()
    };
    let t = &args.tuning;
    cfg.ess_threshold_fraction = t.ess_threshold_fraction.or(f.ess_threshold_fraction).unwrap_or(cfg.ess_threshold_fraction);
    cfg.a = t.a.or(f.a).unwrap_or(cfg.a);
    cfg.jitter_sd = t.jitter_sd.or(f.jitter_sd).unwrap_or(cfg.jitter_sd);
    cfg.resampler = t.resampler.or(f.resampler).unwrap_or(cfg.resampler);
    cfg.moves_per_step = args.moves_per_step.or(f.moves_per_step).unwrap_or(1);
    cfg.score_statistic = args.score_statistic.or(f.score_statistic).unwrap_or_default();

    match target_name.as_str() {
        "mixture" => {
            let (_, r, mut y) = load_mixture(&args.data, s, seed)?;
            if shuffle {
                y = evaluation::shuffled_observations(&y, seed, 0);
            }
            cfg.particles = t.particles.or(f.particles).unwrap_or(evaluation::default_particles(r));
            let target = MixtureTarget::new(r, y)?;
            if method == Method::Amcmc {
                run_chain(&target, AmcmcConfig::for_mixture(r, seed), &args, s)
            } else {
                run_particles(&target, &args, s, &cfg)
            }
        }
        "gaussian5" => {
            let n = args.data.n.or(f.n).unwrap_or(100);
            let target = GaussianMeanTarget::simulate(5, n, 5.0, &mut substream(seed, &[tag::DATA]))?;
            cfg.particles = t.particles.or(f.particles).unwrap_or(2000);
            if method == Method::Amcmc {
                let iterations = default_iterations(5);
                let ac = AmcmcConfig {
                    iterations,
                    burn_in: iterations / 2,
                    nonadaptive: 1000,
                    refresh_every: 100,
                    h: reference_rw_scaling(5),
                    ordering: Ordering::None,
                    seed,
                };
                run_chain(&target, ac, &args, s)
            } else {
                run_particles(&target, &args, s, &cfg)
            }
        }
        other => bail!("unknown target '{other}' (expected mixture or gaussian5)"),
    }
}

fn study(args: StudyArgs, s: &Settings) -> Result<()> {
    let f = &s.file;
    let seed = s.seed(args.data.seed);
    let (k, r, y) = load_mixture(&args.data, s, seed)?;
    let methods = match (&args.methods, &f.methods) {
        (Some(list), _) => parse_method_list(list)?,
        (None, Some(list)) => list.clone(),
        (None, None) => Method::ALL.to_vec(),
    };
    let t = &args.tuning;
    let d = StudyConfig::default();
    let cfg = StudyConfig {
        methods,
        runs: args.runs.or(f.runs).unwrap_or(d.runs),
        particles: t.particles.or(f.particles),
        seed,
        a: t.a.or(f.a).unwrap_or(d.a),
        jitter_sd: t.jitter_sd.or(f.jitter_sd).unwrap_or(d.jitter_sd),
        ess_threshold_fraction: t.ess_threshold_fraction.or(f.ess_threshold_fraction).unwrap_or(d.ess_threshold_fraction),
        resampler: t.resampler.or(f.resampler).unwrap_or(d.resampler),
        predictive_pool: args.predictive_pool.or(f.predictive_pool).unwrap_or_default(),
        amcmc_iterations: t.amcmc_iterations.or(f.amcmc_iterations),
    };
    let result = evaluation::study(k, r, &y, &cfg)?;
    for m in &result.methods {
        if m.failed > 0 {
            eprintln!("warning: {} of {} {} runs failed and were excluded", m.failed, cfg.runs, m.method);
        }
    }
    write_out(args.out.as_deref().or(f.out.as_deref()), &result.to_csv())
}

fn gcurve(args: GcurveArgs, s: &Settings) -> Result<()> {
    let f = &s.file;
    let name = args.target.or(f.target.clone()).unwrap_or_else(|| "gaussian5".into());
    let dim: usize = name
        .strip_prefix("gaussian")
        .and_then(|d| d.parse().ok())
        .filter(|d| *d > 0)
        .with_context(|| format!("unknown target '{name}' (expected gaussian<d>, e.g. gaussian5)"))?;
    let kind = args.kernel.or(f.kernel).unwrap_or(KernelKind::RandomWalk);
    let hs = linspace(
        args.hmin.or(f.hmin).unwrap_or(0.05),
        args.hmax.or(f.hmax).unwrap_or(3.0),
        args.steps.or(f.steps).unwrap_or(60),
    );
    let n = args.n.or(f.n).unwrap_or(100_000);
    let pts = gaussian_g_curve(dim, 1.0, kind, &hs, n, s.seed(args.seed))?;
    let mut text = String::from("h,g,se\n");
    for p in &pts {
        text.push_str(&format!("{},{},{}\n", p.h, p.g, p.se));
    }
    write_out(args.out.as_deref().or(f.out.as_deref()), &text)?;
    if let Some(best) = evaluation::argmax(&pts) {
        eprintln!(
            "argmax h = {} (g = {} +- {}); unimodal within 2 SE: {}",
            best.h,
            best.g,
            best.se,
            evaluation::is_unimodal_within(&pts, 2.0)
        );
    }
    Ok(())
}

fn oracle(args: OracleArgs, s: &Settings) -> Result<bool> {
    let seed = s.seed(args.seed);
    let mut ok = true;
    if matches!(args.which, Oracle::Prop1 | Oracle::All) {
        let r = theory::prop1(args.m.unwrap_or(100_000), seed)?;
        println!("{r}");
        ok &= r.passed();
    }
    if matches!(args.which, Oracle::Lemma1 | Oracle::All) {
        let g = |h: f64| h * (-h).exp();
        let pos = theory::lemma1(g, |h| 0.1 + g(h), 0.0, 4.0, 2000, 200, seed);
        let neg = theory::lemma1(g, |h| 1.0 / (0.05 + g(h)), 0.0, 4.0, 2000, 200, seed);
        println!("{pos} [w = 0.1 + g]");
        println!("{neg} [w = 1 / (0.05 + g)]");
        ok &= pos.consistent() && neg.consistent();
    }
    if matches!(args.which, Oracle::Thm1 | Oracle::All) {
        let r = theory::thm1(theory::default_thm1_g, 1.0, 0.0, 3.0, 1000, 500);
        println!("{r}");
        ok &= r.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = Settings::load(cli.config.as_deref()).and_then(|s| match cli.command {
        Command::Simulate(a) => simulate(a, &s).map(|_| true),
        Command::Run(a) => run(a, &s).map(|_| true),
        Command::Study(a) => study(a, &s).map(|_| true),
        Command::Gcurve(a) => gcurve(a, &s).map(|_| true),
        Command::Oracle(a) => oracle(a, &s),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
