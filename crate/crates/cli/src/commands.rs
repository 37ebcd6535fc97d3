//! Pipeline implementations behind the CLI subcommands. Each command writes
//! deterministic CSV/JSON files into the configured output directory and
//! returns the list of paths it produced.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use qdopt_core::graph::GraphError;
use qdopt_core::optimizer::{self, OptimizerError};
use qdopt_core::privacy::{self, PrivacyError};
use qdopt_core::quantizer::QuantizerConfig;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid rate-bound grid: {0}")]
    RateGrid(String),
    #[error("invalid calibration request: {0}")]
    Calibration(String),
}

impl CommandError {
    /// Divergence aborts get their own process exit code.
    pub fn is_divergence(&self) -> bool {
        matches!(self, CommandError::Optimizer(OptimizerError::Divergence { .. }))
            | matches!(
                self,
                CommandError::Privacy(PrivacyError::Optimizer(OptimizerError::Divergence { .. }))
            )
    }
}

/// JSON summary of a single run.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub converged_at: Option<usize>,
    pub final_mse: f64,
    pub total_bits: u64,
    pub iterations: usize,
}

/// Extra artifacts `run` can emit besides the trace and summary.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmitOptions {
    pub graph: bool,
    pub transcript: bool,
    pub problem: bool,
}

fn write_file(dir: &std::path::Path, name: &str, contents: &str) -> Result<PathBuf, CommandError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| CommandError::Io { path: path.clone(), source })?;
    }
    std::fs::write(&path, contents)
        .map_err(|source| CommandError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// One run: trace CSV plus JSON summary, with optional graph / transcript /
/// problem exports.
pub fn cmd_run(
    cfg: &ExperimentConfig,
    emit: EmitOptions,
) -> Result<(RunSummary, Vec<PathBuf>), CommandError> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem();
    let result = optimizer::run(
        &graph,
        &problem,
        &cfg.optimizer_config(),
        &cfg.quantizer_config(),
        cfg.zinit_seed(),
    )?;
    let summary = RunSummary {
        converged_at: result.converged_at,
        final_mse: result.final_mse(),
        total_bits: result.transcript.total_bits(),
        iterations: result.iterations(),
    };
    let mut files = vec![
        write_file(&cfg.out_dir, "run.csv", &result.trace_csv())?,
        write_file(
            &cfg.out_dir,
            "run_summary.json",
            &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
        )?,
    ];
    if emit.graph {
        files.push(write_file(&cfg.out_dir, "graph.json", &graph.to_json())?);
    }
    if emit.transcript {
        files.push(write_file(&cfg.out_dir, "transcript.json", &result.transcript.to_json())?);
    }
    if emit.problem {
        files.push(write_file(&cfg.out_dir, "problem.json", &problem.to_json())?);
    }
    Ok((summary, files))
}

/// One run per noise level with the cell width coupled as
/// `delta0 = sqrt(sigma2)`; shared graph, data and initialization substreams,
/// levels sorted ascending in the output.
pub fn cmd_privacy_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CommandError> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem();
    let mut levels = cfg.sigma2_list.clone();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("levels are finite"));
    levels.dedup();
    let mut csv = String::from("sigma2,t,mse,cum_bits_total,cum_bits_quantized\n");
    for &level in &levels {
        let mut opt = cfg.optimizer_config();
        opt.sigma2_z0 = level;
        let quant = QuantizerConfig {
            bits: cfg.bits,
            delta0: level.sqrt(),
            gamma: cfg.gamma,
            enabled: cfg.quantize,
        };
        let result = optimizer::run(&graph, &problem, &opt, &quant, cfg.zinit_seed())?;
        for r in &result.trace {
            writeln!(
                csv,
                "{:e},{},{:e},{},{}",
                level, r.t, r.mse, r.cum_bits_total, r.cum_bits_quantized
            )
            .expect("string write");
        }
    }
    Ok(vec![write_file(&cfg.out_dir, "sweep.csv", &csv)?])
}

/// Normalized mutual information between a designated honest node's private
/// datum and the adversary view, per iteration and noise level.
pub fn cmd_privacy_curve(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CommandError> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let model = cfg.adversary_model();
    let points =
        privacy::empirical_privacy_curve(&graph, &model, &cfg.privacy_curve_config(), cfg.seed)?;
    let mut csv = String::from("sigma2_z0,t,nmi,mi_bits,trials\n");
    for p in &points {
        writeln!(csv, "{:e},{},{:e},{:e},{}", p.sigma2_z0, p.t, p.nmi, p.mi_bits, p.trials)
            .expect("string write");
    }
    Ok(vec![write_file(&cfg.out_dir, "privacy_curve.csv", &csv)?])
}

/// One-shot calibration calculator: with `delta` set it returns the smallest
/// Gaussian noise variance that caps the leakage at `delta` bits; with
/// `sigma2_r` set it returns the leakage of that noise level in bits.
pub fn cmd_calibrate(
    sigma2_s: f64,
    delta: Option<f64>,
    sigma2_r: Option<f64>,
) -> Result<f64, CommandError> {
    match (delta, sigma2_r) {
        (Some(d), None) => privacy::required_noise_variance(d, sigma2_s)
            .map_err(|e| CommandError::Calibration(e.to_string())),
        (None, Some(r)) => {
            if !(r > 0.0 && sigma2_s > 0.0) {
                return Err(CommandError::Calibration(
                    "variances must be positive".into(),
                ));
            }
            Ok(privacy::gaussian_mi(sigma2_s, r))
        }
        _ => Err(CommandError::Calibration(
            "pass exactly one of --delta (bits -> variance) or --sigma2-r (variance -> bits)"
                .into(),
        )),
    }
}

/// Parameters of the rate-bound table.
#[derive(Debug, Clone, Copy)]
pub struct RateBoundParams {
    pub delta_min: f64,
    pub delta_max: f64,
    pub steps: usize,
    pub sigma2_s: f64,
    pub cell_width: f64,
}

impl Default for RateBoundParams {
    fn default() -> Self {
        Self { delta_min: 0.05, delta_max: 2.0, steps: 40, sigma2_s: 1.0, cell_width: 1e-5 }
    }
}

/// Bits needed to transmit the obfuscated datum across a leakage-level grid.
pub fn cmd_rate_bound(
    params: &RateBoundParams,
    out_dir: &std::path::Path,
) -> Result<Vec<PathBuf>, CommandError> {
    if !(params.delta_min > 0.0 && params.delta_max > params.delta_min) {
        return Err(CommandError::RateGrid(format!(
            "need 0 < delta_min < delta_max, got [{}, {}]",
            params.delta_min, params.delta_max
        )));
    }
    if params.steps < 2 {
        return Err(CommandError::RateGrid(format!("need at least 2 steps, got {}", params.steps)));
    }
    if !(params.sigma2_s > 0.0 && params.cell_width > 0.0) {
        return Err(CommandError::RateGrid("sigma2_s and cell_width must be positive".into()));
    }
    let mut csv = String::from("delta,bits\n");
    for k in 0..params.steps {
        let delta = params.delta_min
            + (params.delta_max - params.delta_min) * k as f64 / (params.steps - 1) as f64;
        let bits = privacy::min_bits_bound(delta, params.sigma2_s, params.cell_width);
        writeln!(csv, "{:e},{:e}", delta, bits).expect("string write");
    }
    Ok(vec![write_file(out_dir, "rate_bound.csv", &csv)?])
}

/// Proposed quantized run against the unquantized high-precision baseline on
/// a shared instance (same graph, data and initialization noise).
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CommandError> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem();
    let proposed_label = format!("quantized-{}bit", cfg.bits);
    let baseline_label = format!("unquantized-{}bit", cfg.init_bits);
    let proposed = QuantizerConfig {
        bits: cfg.bits,
        delta0: cfg.effective_delta0(),
        gamma: cfg.gamma,
        enabled: true,
    };
    let baseline = QuantizerConfig { enabled: false, ..proposed };
    let mut csv = String::from("variant,t,mse,cum_bits_total,cum_bits_quantized\n");
    for (label, quant) in [(&proposed_label, &proposed), (&baseline_label, &baseline)] {
        let result =
            optimizer::run(&graph, &problem, &cfg.optimizer_config(), quant, cfg.zinit_seed())?;
        for r in &result.trace {
            writeln!(
                csv,
                "{},{},{:e},{},{}",
                label, r.t, r.mse, r.cum_bits_total, r.cum_bits_quantized
            )
            .expect("string write");
        }
    }
    Ok(vec![write_file(&cfg.out_dir, "compare.csv", &csv)?])
}
