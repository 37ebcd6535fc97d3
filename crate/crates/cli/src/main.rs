//! `qdopt`: experiment runner for quantized privacy-preserving distributed
//! optimization. Subcommands reproduce the standard pipelines (single run,
//! noise-level sweep, privacy curve, rate bound, quantized-vs-unquantized
//! comparison) and emit plot-ready CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qdopt_cli::commands::{self, EmitOptions, RateBoundParams};
use qdopt_cli::config::{ExperimentConfig, OUT_DIR_ENV};
use qdopt_cli::{CommandError, ConfigError, EXIT_CONFIG, EXIT_DIVERGENCE};

#[derive(Parser)]
#[command(
    name = "qdopt",
    about = "Simulator for communication-efficient privacy-preserving distributed optimization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides; every key of the config file has a same-named flag.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat key=value config file applied before any flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Objective: consensus or least-squares.
    #[arg(long)]
    application: Option<String>,
    /// Node count.
    #[arg(long)]
    n: Option<usize>,
    /// Master seed; all substreams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Operator averaging constant (0 = PDMM, 0.5 = ADMM).
    #[arg(long)]
    theta: Option<f64>,
    /// Penalty constant.
    #[arg(long)]
    c: Option<f64>,
    /// Cell-width decay rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// Quantizer bits per scalar.
    #[arg(long)]
    l: Option<u32>,
    /// Initial quantizer cell width (defaults to sqrt(sigma2_z0)).
    #[arg(long)]
    delta0: Option<f64>,
    /// Variance of the auxiliary initialization noise.
    #[arg(long)]
    sigma2_z0: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop threshold.
    #[arg(long)]
    mse_threshold: Option<f64>,
    /// Disable quantization (high-precision passthrough).
    #[arg(long)]
    no_quantize: bool,
    /// Corrupted node ids, comma separated, 1-based.
    #[arg(long)]
    corrupted: Option<String>,
    /// Enable the channel eavesdropper.
    #[arg(long)]
    eavesdropper: bool,
    /// Monte Carlo trials for the privacy curve.
    #[arg(long)]
    trials: Option<usize>,
    /// Variable dimension override.
    #[arg(long)]
    u: Option<usize>,
    /// Observation rows per node (least squares).
    #[arg(long)]
    rows_per_node: Option<usize>,
    /// Accounted bits per scalar for high-precision transmissions.
    #[arg(long)]
    init_bits: Option<u64>,
    /// Stop rule: oracle-mse or successive-diff.
    #[arg(long)]
    stop_rule: Option<String>,
    /// Noise levels for sweep/curve pipelines, comma separated.
    #[arg(long)]
    sigma2_list: Option<String>,
    /// Iterations tracked by the privacy curve.
    #[arg(long)]
    curve_iterations: Option<usize>,
    /// Histogram bins for the privacy curve.
    #[arg(long)]
    curve_bins: Option<usize>,
    /// Designated honest node for the privacy curve, 1-based.
    #[arg(long)]
    designated: Option<usize>,
    /// Output directory (also settable via QDOPT_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run; writes run.csv and run_summary.json.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Also write graph.json.
        #[arg(long)]
        emit_graph: bool,
        /// Also write transcript.json (full message log).
        #[arg(long)]
        emit_transcript: bool,
        /// Also write problem.json.
        #[arg(long)]
        emit_problem: bool,
    },
    /// One run per noise level in sigma2_list; writes sweep.csv.
    PrivacySweep {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Empirical NMI privacy curve; writes privacy_curve.csv.
    PrivacyCurve {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Bits-versus-leakage bound table; writes rate_bound.csv.
    RateBound {
        /// Smallest leakage level on the grid.
        #[arg(long, default_value_t = 0.05)]
        delta_min: f64,
        /// Largest leakage level on the grid.
        #[arg(long, default_value_t = 2.0)]
        delta_max: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 40)]
        steps: usize,
        /// Private-data variance.
        #[arg(long, default_value_t = 1.0)]
        sigma2_s: f64,
        /// Quantization cell width of the obfuscated datum.
        #[arg(long, default_value_t = 1e-5)]
        cell_width: f64,
        /// Output directory (also settable via QDOPT_OUT_DIR).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Quantized run versus unquantized baseline; writes compare.csv.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Noise-calibration calculator; prints a single number.
    Calibrate {
        /// Private-data variance.
        #[arg(long, default_value_t = 1.0)]
        sigma2_s: f64,
        /// Target leakage in bits; prints the required noise variance.
        #[arg(long)]
        delta: Option<f64>,
        /// Noise variance; prints the resulting leakage in bits.
        #[arg(long)]
        sigma2_r: Option<f64>,
    },
}

fn resolve(overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &overrides.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env();
    if let Some(v) = &overrides.application {
        cfg.set("application", v)?;
    }
    if let Some(v) = overrides.n {
        cfg.set("n", &v.to_string())?;
    }
    if let Some(v) = overrides.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(v) = overrides.theta {
        cfg.set("theta", &v.to_string())?;
    }
    if let Some(v) = overrides.c {
        cfg.set("c", &v.to_string())?;
    }
    if let Some(v) = overrides.gamma {
        cfg.set("gamma", &v.to_string())?;
    }
    if let Some(v) = overrides.l {
        cfg.set("l", &v.to_string())?;
    }
    if let Some(v) = overrides.delta0 {
        cfg.set("delta0", &v.to_string())?;
    }
    if let Some(v) = overrides.sigma2_z0 {
        cfg.set("sigma2_z0", &v.to_string())?;
    }
    if let Some(v) = overrides.max_iters {
        cfg.set("max_iters", &v.to_string())?;
    }
    if let Some(v) = overrides.mse_threshold {
        cfg.set("mse_threshold", &v.to_string())?;
    }
    if overrides.no_quantize {
        cfg.set("quantize", "false")?;
    }
    if let Some(v) = &overrides.corrupted {
        cfg.set("corrupted", v)?;
    }
    if overrides.eavesdropper {
        cfg.set("eavesdropper", "true")?;
    }
    if let Some(v) = overrides.trials {
        cfg.set("trials", &v.to_string())?;
    }
    if let Some(v) = overrides.u {
        cfg.set("u", &v.to_string())?;
    }
    if let Some(v) = overrides.rows_per_node {
        cfg.set("rows_per_node", &v.to_string())?;
    }
    if let Some(v) = overrides.init_bits {
        cfg.set("init_bits", &v.to_string())?;
    }
    if let Some(v) = &overrides.stop_rule {
        cfg.set("stop_rule", v)?;
    }
    if let Some(v) = &overrides.sigma2_list {
        cfg.set("sigma2_list", v)?;
    }
    if let Some(v) = overrides.curve_iterations {
        cfg.set("curve_iterations", &v.to_string())?;
    }
    if let Some(v) = overrides.curve_bins {
        cfg.set("curve_bins", &v.to_string())?;
    }
    if let Some(v) = overrides.designated {
        cfg.set("designated", &v.to_string())?;
    }
    if let Some(v) = &overrides.out_dir {
        cfg.out_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(command: &Command) -> Result<Vec<PathBuf>, CommandError> {
    match command {
        Command::Run { overrides, emit_graph, emit_transcript, emit_problem } => {
            let cfg = resolve(overrides)?;
            let emit = EmitOptions {
                graph: *emit_graph,
                transcript: *emit_transcript,
                problem: *emit_problem,
            };
            let (summary, files) = commands::cmd_run(&cfg, emit)?;
            println!(
                "run: {} iterations, converged_at={:?}, final_mse={:e}, total_bits={}",
                summary.iterations, summary.converged_at, summary.final_mse, summary.total_bits
            );
            Ok(files)
        }
        Command::PrivacySweep { overrides } => commands::cmd_privacy_sweep(&resolve(overrides)?),
        Command::PrivacyCurve { overrides } => commands::cmd_privacy_curve(&resolve(overrides)?),
        Command::RateBound { delta_min, delta_max, steps, sigma2_s, cell_width, out_dir } => {
            let params = RateBoundParams {
                delta_min: *delta_min,
                delta_max: *delta_max,
                steps: *steps,
                sigma2_s: *sigma2_s,
                cell_width: *cell_width,
            };
            let dir = out_dir
                .clone()
                .or_else(|| std::env::var(OUT_DIR_ENV).ok().filter(|v| !v.is_empty()).map(Into::into))
                .unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_rate_bound(&params, &dir)
        }
        Command::Compare { overrides } => commands::cmd_compare(&resolve(overrides)?),
        Command::Calibrate { sigma2_s, delta, sigma2_r } => {
            let value = commands::cmd_calibrate(*sigma2_s, *delta, *sigma2_r)?;
            println!("{value:e}");
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            let code = if matches!(
                err,
                CommandError::Config(_) | CommandError::RateGrid(_) | CommandError::Calibration(_)
            ) {
                EXIT_CONFIG
            } else if err.is_divergence() {
                EXIT_DIVERGENCE
            } else {
                1
            };
            ExitCode::from(code as u8)
        }
    }
}
