//! Command-line front end: dataset simulation, sensitivity bounds,
//! confounding-strength calibration, and experiment reproduction.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gammacal::bounds::{bounds_curve, critical_value, BootstrapPolicy, CiOptions, CriticalValue, Estimand, GammaGrid, IntervalKind, QbOptions};
use gammacal::calibrate::{informal_benchmark, nco_lower_bound, rct_lower_bound, BenchmarkOptions, NcoOptions, OmissionMode, PropensityEstimator, RctOptions};
use gammacal::harness::{self, default_gamma_choices, robustness_table, CurveMode, ExperimentOptions, RobustnessOptions, Scale};
use gammacal::sim::{make_config_with_seed, sample_pair, SimulationConfig};
use gammacal::{Dataset, Error};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "gammacal", version, about = "Sensitivity-parameter calibration for the marginal sensitivity model")]
struct Cli {
    /// Worker threads (default: GAMMA_CAL_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired RCT/observational dataset from an experiment preset.
    Simulate(SimulateArgs),
    /// Sensitivity bounds for the ATE (or one arm) over a gamma grid.
    Bounds(BoundsArgs),
    /// Estimate or lower-bound the confounding strength.
    #[command(subcommand)]
    Calibrate(CalibrateCmd),
    /// Run experiment presets end to end and write the results tree.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment preset (1..=14).
    #[arg(long, conflicts_with = "config")]
    experiment: Option<u8>,
    /// Explicit simulation config (JSON), as an alternative to a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generation seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Base seed for the frozen preset coefficients.
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    /// Existing output directory for rct.csv, obs.csv and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Also write the oracle side-tables (U, true propensities, Y(0), Y(1)).
    #[arg(long)]
    debug_oracle: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum EstimandArg {
    Ate,
    Theta1,
    Theta0,
}

#[derive(Copy, Clone, ValueEnum)]
enum IntervalArg {
    Pei,
    Ci,
}

impl From<IntervalArg> for IntervalKind {
    fn from(v: IntervalArg) -> Self {
        match v {
            IntervalArg::Pei => IntervalKind::Pei,
            IntervalArg::Ci => IntervalKind::Ci,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyArg {
    Full,
    Fast,
}

impl From<PolicyArg> for BootstrapPolicy {
    fn from(v: PolicyArg) -> Self {
        match v {
            PolicyArg::Full => BootstrapPolicy::FullRefit,
            PolicyArg::Fast => BootstrapPolicy::Fast,
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    /// Input CSV with columns x1..xp, t, y (w1..wq ignored here).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimandArg::Ate)]
    estimand: EstimandArg,
    /// Grid as min:max:count with inclusive endpoints.
    #[arg(long, default_value = "1:20:20")]
    gamma_grid: String,
    #[arg(long, value_enum, default_value_t = IntervalArg::Pei)]
    interval: IntervalArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates for the CI.
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Full)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when omitted); a .manifest.json lands beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CalibrateCmd {
    /// Informal benchmarking over observed covariates.
    Ib(IbArgs),
    /// Lower bound from a paired RCT.
    Rct(RctArgs),
    /// Lower bound from negative control outcomes.
    Nco(NcoArgs),
}

#[derive(Copy, Clone, ValueEnum)]
enum EstimatorArg {
    Logistic,
    Forest,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Loo,
    Lmo,
}

#[derive(Args)]
struct IbArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Logistic)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Lmo)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RctArgs {
    #[arg(long)]
    rct: PathBuf,
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "1:13:25")]
    gamma_grid: String,
    #[arg(long, value_enum, default_value_t = IntervalArg::Pei)]
    interval: IntervalArg,
    /// Bootstrap replicates when --interval ci.
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fast)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON trace path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NcoArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, default_value = "1:13:25")]
    gamma_grid: String,
    #[arg(long, value_enum, default_value_t = IntervalArg::Pei)]
    interval: IntervalArg,
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fast)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

#[derive(Args)]
struct ReproduceArgs {
    /// One experiment preset (1..=14).
    #[arg(long, conflicts_with = "all")]
    experiment: Option<u8>,
    /// All 14 presets.
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum)]
    scale: ScaleArg,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override each preset's interval choice for the calibrators.
    #[arg(long, value_enum)]
    interval: Option<IntervalArg>,
    /// Skip the robustness (containment) table.
    #[arg(long)]
    no_robustness: bool,
    /// Existing output directory for the results tree.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("GAMMA_CAL_THREADS").ok().and_then(|v| v.parse().ok())
    });

    let run = || match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Calibrate(cmd) => cmd_calibrate(cmd),
        Command::Reproduce(args) => cmd_reproduce(args),
    };

    let result = match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Numerical(format!("thread pool: {e}"))),
        },
        _ => run(),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::InvalidInput(_) | Error::Schema(_) => EXIT_USAGE,
                Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
                Error::EmptyArm(_) | Error::NoSupportOverlap | Error::Numerical(_) => EXIT_NUMERICAL,
            })
        }
    }
}

fn require_dir(path: &Path) -> Result<(), Error> {
    if !path.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", path.display()),
        )));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<GammaGrid, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!("gamma grid `{spec}` is not min:max:count")));
    }
    let min: f64 = parts[0].parse().map_err(|_| Error::invalid("bad grid min"))?;
    let max: f64 = parts[1].parse().map_err(|_| Error::invalid("bad grid max"))?;
    let count: usize = parts[2].parse().map_err(|_| Error::invalid("bad grid count"))?;
    GammaGrid::equally_spaced(min, max, count)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let config: SimulationConfig = match (args.experiment, &args.config) {
        (Some(id), None) => make_config_with_seed(id, args.base_seed)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let config: SimulationConfig =
                serde_json::from_str(&text).map_err(|e| Error::invalid(format!("bad config file: {e}")))?;
            config.validate()?;
            config
        }
        _ => return Err(Error::invalid("pass exactly one of --experiment or --config")),
    };
    require_dir(&args.out)?;

    let pair = sample_pair(&config, args.seed)?;
    pair.rct.write_csv(args.out.join("rct.csv"))?;
    pair.obs.write_csv(args.out.join("obs.csv"))?;
    if args.debug_oracle {
        std::fs::write(args.out.join("rct_oracle.csv"), pair.rct_hidden.to_csv_string())?;
        std::fs::write(args.out.join("obs_oracle.csv"), pair.obs_hidden.to_csv_string())?;
    }

    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        version: &'static str,
        seed: u64,
        base_seed: u64,
        debug_oracle: bool,
        diagnostics: &'a gammacal::sim::Diagnostics,
        config: &'a SimulationConfig,
    }
    write_json(
        &args.out.join("manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION"),
            seed: args.seed,
            base_seed: args.base_seed,
            debug_oracle: args.debug_oracle,
            diagnostics: &pair.diagnostics,
            config: &config,
        },
    )?;
    println!(
        "wrote rct.csv ({} rows) and obs.csv ({} rows) to {}",
        pair.rct.n_rows(),
        pair.obs.n_rows(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), Error> {
    let data = Dataset::read_csv(&args.data)?;
    let grid = parse_grid(&args.gamma_grid)?;
    let estimand = match args.estimand {
        EstimandArg::Ate => Estimand::Ate,
        EstimandArg::Theta1 => Estimand::Theta1,
        EstimandArg::Theta0 => Estimand::Theta0,
    };
    let interval: IntervalKind = args.interval.into();
    let ci = CiOptions { alpha: args.alpha, b: args.bootstrap, policy: args.policy.into() };
    let opts = QbOptions { k_folds: 5, estimand, ci: (interval == IntervalKind::Ci).then_some(ci) };
    let curve = bounds_curve(&data, &grid, &opts, args.seed)?;
    for warning in &curve.warnings {
        eprintln!("warning: {warning}");
    }

    let csv = curve.to_csv_string();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            #[derive(serde::Serialize)]
            struct Manifest {
                version: &'static str,
                gamma_grid: String,
                alpha: f64,
                bootstrap: usize,
                interval: &'static str,
                k_folds: usize,
                seed: u64,
            }
            write_json(
                &path.with_extension("manifest.json"),
                &Manifest {
                    version: env!("CARGO_PKG_VERSION"),
                    gamma_grid: args.gamma_grid.clone(),
                    alpha: args.alpha,
                    bootstrap: args.bootstrap,
                    interval: if interval == IntervalKind::Ci { "ci" } else { "pei" },
                    k_folds: 5,
                    seed: args.seed,
                },
            )?;
        }
        None => print!("{csv}"),
    }

    if grid.len() == 1 {
        println!("pei width at gamma={}: {:e}", grid.values()[0], curve.pei_upper[0] - curve.pei_lower[0]);
    }
    match critical_value(&curve, 0.0, interval)? {
        CriticalValue::AtGamma(g) => println!("critical value (target 0): {g}"),
        CriticalValue::BeyondGrid { grid_max } => {
            println!("critical value (target 0): greater than grid max {grid_max}")
        }
    }
    Ok(())
}

fn cmd_calibrate(cmd: CalibrateCmd) -> Result<(), Error> {
    match cmd {
        CalibrateCmd::Ib(args) => {
            let obs = Dataset::read_csv(&args.obs)?;
            let opts = BenchmarkOptions::new(
                match args.estimator {
                    EstimatorArg::Logistic => PropensityEstimator::Logistic,
                    EstimatorArg::Forest => PropensityEstimator::Forest,
                },
                match args.mode {
                    ModeArg::Loo => OmissionMode::LeaveOneOut,
                    ModeArg::Lmo => OmissionMode::LeaveMultipleOut,
                },
            );
            let report = informal_benchmark(&obs, &opts, args.seed)?;
            if let Some(path) = &args.out {
                write_json(path, &report)?;
            }
            println!(
                "gamma_ib: {} (low {}, {} subsets)",
                report.gamma_ib(),
                report.gamma_low,
                report.records.len()
            );
        }
        CalibrateCmd::Rct(args) => {
            let rct = Dataset::read_csv(&args.rct)?;
            let obs = Dataset::read_csv(&args.obs)?;
            let opts = RctOptions {
                alpha: args.alpha,
                grid: parse_grid(&args.gamma_grid)?,
                interval: args.interval.into(),
                ci: CiOptions { alpha: args.alpha, b: args.bootstrap, policy: args.policy.into() },
                ..RctOptions::default()
            };
            let trace = rct_lower_bound(&rct, &obs, &opts, args.seed)?;
            if trace.shift_overlap_warning {
                eprintln!("warning: no overlap in covariate shift (domain classifier is near perfect)");
            }
            if let Some(path) = &args.out {
                write_json(path, &trace)?;
            }
            let suffix = if trace.all_rejected { " (all gammas rejected; grid max)" } else { "" };
            println!("gamma_lb_rct: {}{}", trace.gamma_lb, suffix);
        }
        CalibrateCmd::Nco(args) => {
            let obs = Dataset::read_csv(&args.obs)?;
            let opts = NcoOptions {
                grid: parse_grid(&args.gamma_grid)?,
                interval: args.interval.into(),
                k_folds: 5,
                ci: CiOptions { alpha: 0.05, b: args.bootstrap, policy: args.policy.into() },
            };
            let report = nco_lower_bound(&obs, &opts, args.seed)?;
            if let Some(path) = &args.out {
                write_json(path, &report)?;
            }
            let suffix = if report.any_beyond_grid { " (a scan never contained 0; grid max)" } else { "" };
            println!("gamma_lb_nco: {}{}", report.gamma_lb, suffix);
        }
    }
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<(), Error> {
    let ids: Vec<u8> = if args.all {
        (1..=14).collect()
    } else {
        vec![args.experiment.ok_or_else(|| Error::invalid("pass --experiment N or --all"))?]
    };
    require_dir(&args.out)?;
    let scale = match args.scale {
        ScaleArg::Paper => Scale::Paper,
        ScaleArg::Desk => Scale::Desk,
    };

    let mut combined = harness::output::summary_csv_header();
    for &id in &ids {
        let opts = ExperimentOptions {
            replicates: args.replicates,
            base_seed: args.seed,
            scale,
            interval: args.interval.map(Into::into),
            curve: CurveMode::WithCi,
        };
        let result = harness::run_experiment(id, &opts)?;
        let robustness = if args.no_robustness {
            None
        } else {
            let choices = default_gamma_choices(&result);
            let ropts = RobustnessOptions {
                b: scale.bootstrap_b(),
                alpha: 0.05,
                policy: scale.bootstrap_policy(),
            };
            Some(robustness_table(&result, &choices, &ropts, args.seed)?)
        };
        let dir = harness::output::write_experiment(&result, robustness.as_ref(), &args.out)?;
        combined.push_str(&harness::output::summary_csv_row(&result));
        println!("experiment {id}: results in {}", dir.display());
        if result.replicates_failed > 0 {
            eprintln!(
                "warning: experiment {id}: {} of {} replicates failed",
                result.replicates_failed, args.replicates
            );
        }
    }
    std::fs::write(args.out.join("summary.csv"), combined)?;
    Ok(())
}
