use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avqds::metrics::ScalingModel;
use avqds_cli::config::{load_config, Method, ModelKind, PoolChoice, RunConfig};
use avqds_cli::{commands, AppError, AppResult};

#[derive(Parser)]
#[command(
    name = "avqds",
    version,
    about = "Adaptive variational simulation of Lindblad dynamics (trajectories, vectorization, exact reference)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file; omitted fields take the documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Number of spins override.
    #[arg(long)]
    n_spins: Option<usize>,
    /// Trajectory count override.
    #[arg(long)]
    n_trajectories: Option<usize>,
    /// Time step override.
    #[arg(long)]
    dt: Option<f64>,
    /// Total evolution time override.
    #[arg(long)]
    t_f: Option<f64>,
    /// Noise model override: dephasing | amplitude_damping | closed.
    #[arg(long)]
    model: Option<String>,
    /// Operator pool override: P1 | P2 | P3.
    #[arg(long)]
    pool: Option<String>,
    /// Adaptive threshold override.
    #[arg(long)]
    r: Option<f64>,
    /// Record stride override.
    #[arg(long)]
    record_stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic-unravelling run: a farm of trajectories, averaged.
    RunTrajectory(CommonOpts),
    /// Vectorized (doubled-register) run.
    RunVectorized(CommonOpts),
    /// Exact dense reference integration.
    Exact(CommonOpts),
    /// Join two time-series CSVs and emit error columns.
    Compare {
        /// First time series (typically variational).
        #[arg(long)]
        a: PathBuf,
        /// Second time series (typically the exact reference).
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep system sizes and fit resource-count scaling models.
    Scaling {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        /// Adaptive thresholds for the vectorized rows.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-5, 1e-6])]
        vec_thresholds: Vec<f64>,
    },
    /// Fit a (N, y) CSV to the power-law and/or exponential model.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// power | exponential; omit for both.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(opts: &CommonOpts, method: Method) -> AppResult<RunConfig> {
    let mut cfg = match &opts.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    cfg.method = method;
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    if let Some(n) = opts.n_spins {
        cfg.n_spins = n;
    }
    if let Some(n) = opts.n_trajectories {
        cfg.n_trajectories = n;
    }
    if let Some(dt) = opts.dt {
        cfg.dt = dt;
    }
    if let Some(t_f) = opts.t_f {
        cfg.t_f = t_f;
    }
    if let Some(model) = &opts.model {
        cfg.model = match model.as_str() {
            "dephasing" => ModelKind::Dephasing,
            "amplitude_damping" => ModelKind::AmplitudeDamping,
            "closed" => ModelKind::Closed,
            other => return Err(AppError::Validation(format!("unknown model '{other}'"))),
        };
    }
    if let Some(pool) = &opts.pool {
        cfg.pool = match pool.as_str() {
            "P1" | "p1" => PoolChoice::P1,
            "P2" | "p2" => PoolChoice::P2,
            "P3" | "p3" => PoolChoice::P3,
            other => return Err(AppError::Validation(format!("unknown pool '{other}'"))),
        };
    }
    if let Some(r) = opts.r {
        cfg.adaptive.r = Some(r);
    }
    if let Some(stride) = opts.record_stride {
        cfg.record_stride = stride;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::RunTrajectory(opts) => {
            let cfg = build_config(&opts, Method::Trajectory)?;
            commands::cmd_run_trajectory(&cfg, &opts.out)
        }
        Command::RunVectorized(opts) => {
            let cfg = build_config(&opts, Method::Vectorized)?;
            commands::cmd_run_vectorized(&cfg, &opts.out)
        }
        Command::Exact(opts) => {
            let cfg = build_config(&opts, Method::Exact)?;
            commands::cmd_exact(&cfg, &opts.out)
        }
        Command::Compare { a, b, out } => commands::cmd_compare(&a, &b, &out).map(|report| {
            println!(
                "compared {} points, max |ΔE| = {:.6}{}",
                report.n_points,
                report.max_abs_energy_error,
                report
                    .final_infidelity
                    .map(|d| format!(", final infidelity D = {d:.6}"))
                    .unwrap_or_default()
            );
        }),
        Command::Scaling { common, n_min, n_max, vec_thresholds } => {
            let cfg = build_config(&common, Method::Trajectory)?;
            commands::cmd_scaling(&cfg, n_min, n_max, &vec_thresholds, &common.out).map(|_| ())
        }
        Command::Fit { input, model, out } => {
            let model = match model.as_deref() {
                None => None,
                Some("power") => Some(ScalingModel::Power),
                Some("exponential") | Some("exp") => Some(ScalingModel::Exponential),
                Some(other) => {
                    return Err(AppError::Validation(format!("unknown fit model '{other}'")))
                }
            };
            commands::cmd_fit(&input, model, out.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    // bad arguments are validation failures (exit 1); --help/--version exit 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
