//! Experiment configuration: defaults, flat key=value config files, and
//! flag overrides, all funneled through one `set` path so files and flags
//! cannot drift apart.

use std::path::{Path, PathBuf};

use thiserror::Error;

use qdopt_core::graph::Graph;
use qdopt_core::optimizer::{OptimizerConfig, StopRule};
use qdopt_core::privacy::{AdversaryModel, PrivacyCurveConfig};
use qdopt_core::problem::{ConsensusProblem, LeastSquaresProblem, Problem};
use qdopt_core::quantizer::QuantizerConfig;
use qdopt_core::seeds;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "QDOPT_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line} is not `key=value`: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("invalid value for {key}: {value:?} ({reason})")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("invalid config field {field}: {reason}")]
    Validation { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Application {
    Consensus,
    LeastSquares,
}

impl Application {
    fn parse(text: &str) -> Option<Self> {
        match text {
            "consensus" => Some(Self::Consensus),
            "least-squares" | "least_squares" => Some(Self::LeastSquares),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Consensus => "consensus",
            Self::LeastSquares => "least-squares",
        }
    }
}

/// Fully resolved experiment parameters. Node ids in `corrupted` and
/// `designated` are 1-based, matching every external surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub application: Application,
    pub n: usize,
    pub seed: u64,
    pub theta: f64,
    pub c: f64,
    pub gamma: f64,
    /// Quantizer bits per scalar (`l`).
    pub bits: u32,
    /// Initial cell width; defaults to `sqrt(sigma2_z0)` when unset.
    pub delta0: Option<f64>,
    pub sigma2_z0: f64,
    pub max_iters: usize,
    pub mse_threshold: f64,
    pub quantize: bool,
    pub corrupted: Vec<usize>,
    pub eavesdropper: bool,
    pub trials: usize,
    /// Variable dimension; defaults to 1 (consensus) or 3 (least squares).
    pub u: Option<usize>,
    pub rows_per_node: usize,
    pub init_bits: u64,
    pub stop_rule: StopRule,
    /// Noise levels for sweep and privacy-curve pipelines.
    pub sigma2_list: Vec<f64>,
    pub curve_iterations: usize,
    pub curve_bins: usize,
    pub designated: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            application: Application::Consensus,
            n: 30,
            seed: 1,
            theta: 0.0,
            c: 0.9,
            gamma: 0.9,
            bits: 1,
            delta0: None,
            sigma2_z0: 1.0,
            max_iters: 500,
            mse_threshold: 1e-12,
            quantize: true,
            corrupted: Vec::new(),
            eavesdropper: false,
            trials: 1000,
            u: None,
            rows_per_node: 5,
            init_bits: 64,
            stop_rule: StopRule::OracleMse,
            sigma2_list: vec![1.0, 1e2, 1e4],
            curve_iterations: 25,
            curve_bins: 8,
            designated: None,
            out_dir: PathBuf::from("."),
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(key, value, e.to_string()))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, value, "expected true/false")),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|part| parse_num(key, part.trim())).collect()
}

impl ExperimentConfig {
    /// Applies one `key=value` assignment; config files and flag overrides
    /// both land here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "application" => {
                self.application = Application::parse(value)
                    .ok_or_else(|| invalid(key, value, "expected consensus or least-squares"))?;
            }
            "n" => self.n = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "theta" => self.theta = parse_num(key, value)?,
            "c" => self.c = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "l" | "bits" => self.bits = parse_num(key, value)?,
            "delta0" => self.delta0 = Some(parse_num(key, value)?),
            "sigma2_z0" => self.sigma2_z0 = parse_num(key, value)?,
            "max_iters" => self.max_iters = parse_num(key, value)?,
            "mse_threshold" => self.mse_threshold = parse_num(key, value)?,
            "quantize" => self.quantize = parse_bool(key, value)?,
            "corrupted" => self.corrupted = parse_list(key, value)?,
            "eavesdropper" => self.eavesdropper = parse_bool(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "u" => self.u = Some(parse_num(key, value)?),
            "rows_per_node" => self.rows_per_node = parse_num(key, value)?,
            "init_bits" => self.init_bits = parse_num(key, value)?,
            "stop_rule" => {
                self.stop_rule = match value {
                    "oracle-mse" | "oracle_mse" => StopRule::OracleMse,
                    "successive-diff" | "successive_diff" => StopRule::SuccessiveDiff,
                    _ => return Err(invalid(key, value, "expected oracle-mse or successive-diff")),
                };
            }
            "sigma2_list" => self.sigma2_list = parse_list(key, value)?,
            "curve_iterations" => self.curve_iterations = parse_num(key, value)?,
            "curve_bins" => self.curve_bins = parse_num(key, value)?,
            "designated" => self.designated = Some(parse_num(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Loads assignments from a flat key=value file (`#` starts a comment).
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { line: idx + 1, text: raw.into() })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies the environment override for the output directory.
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &'static str, reason: String| Err(ConfigError::Validation { field, reason });
        if self.n < 2 {
            return err("n", format!("need at least 2 nodes, got {}", self.n));
        }
        if !(self.theta >= 0.0 && self.theta < 1.0) {
            return err("theta", format!("must lie in [0, 1), got {}", self.theta));
        }
        if !(self.c > 0.0) {
            return err("c", format!("must be positive, got {}", self.c));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return err("gamma", format!("must lie in (0, 1), got {}", self.gamma));
        }
        if self.bits < 1 || self.bits > 64 {
            return err("l", format!("must lie in 1..=64, got {}", self.bits));
        }
        if !(self.sigma2_z0 >= 0.0) {
            return err("sigma2_z0", format!("must be non-negative, got {}", self.sigma2_z0));
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0) {
                return err("delta0", format!("must be positive, got {d}"));
            }
        }
        if self.quantize && self.delta0.is_none() && self.sigma2_z0 == 0.0 {
            return err(
                "delta0",
                "quantization needs a positive cell width; set delta0 or a positive sigma2_z0"
                    .into(),
            );
        }
        if !(self.mse_threshold >= 0.0) {
            return err("mse_threshold", format!("must be non-negative, got {}", self.mse_threshold));
        }
        if self.trials == 0 {
            return err("trials", "must be positive".into());
        }
        if self.rows_per_node == 0 {
            return err("rows_per_node", "must be positive".into());
        }
        if self.u == Some(0) {
            return err("u", "must be positive".into());
        }
        if self.curve_bins < 2 {
            return err("curve_bins", format!("need at least 2 bins, got {}", self.curve_bins));
        }
        if self.curve_iterations == 0 {
            return err("curve_iterations", "must be positive".into());
        }
        if self.sigma2_list.is_empty() {
            return err("sigma2_list", "must not be empty".into());
        }
        if self.sigma2_list.iter().any(|&v| !(v > 0.0)) {
            return err("sigma2_list", "levels must be positive".into());
        }
        for &node in &self.corrupted {
            if node == 0 || node > self.n {
                return err("corrupted", format!("node ids are 1..={}, got {node}", self.n));
            }
        }
        if let Some(node) = self.designated {
            if node == 0 || node > self.n {
                return err("designated", format!("node ids are 1..={}, got {node}", self.n));
            }
        }
        Ok(())
    }

    pub fn resolved_u(&self) -> usize {
        self.u.unwrap_or(match self.application {
            Application::Consensus => 1,
            Application::LeastSquares => 3,
        })
    }

    pub fn effective_delta0(&self) -> f64 {
        self.delta0.unwrap_or_else(|| self.sigma2_z0.sqrt())
    }

    pub fn graph_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, seeds::STREAM_GRAPH)
    }

    pub fn data_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, seeds::STREAM_DATA)
    }

    pub fn zinit_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, seeds::STREAM_ZINIT)
    }

    pub fn build_graph(&self) -> Result<Graph, qdopt_core::graph::GraphError> {
        Graph::generate_geometric(self.n, self.graph_seed())
    }

    pub fn build_problem(&self) -> Problem {
        match self.application {
            Application::Consensus => Problem::Consensus(ConsensusProblem::sample_gaussian(
                self.n,
                self.resolved_u(),
                self.data_seed(),
            )),
            Application::LeastSquares => {
                Problem::LeastSquares(LeastSquaresProblem::sample_gaussian(
                    self.n,
                    self.resolved_u(),
                    self.rows_per_node,
                    self.data_seed(),
                ))
            }
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            theta: self.theta,
            c: self.c,
            max_iters: self.max_iters,
            mse_threshold: self.mse_threshold,
            sigma2_z0: self.sigma2_z0,
            init_bits_per_scalar: self.init_bits,
            stop_rule: self.stop_rule,
        }
    }

    pub fn quantizer_config(&self) -> QuantizerConfig {
        QuantizerConfig {
            bits: self.bits,
            delta0: if self.quantize { self.effective_delta0() } else { 1.0 },
            gamma: self.gamma,
            enabled: self.quantize,
        }
    }

    /// Adversary model with corrupted ids converted to 0-based.
    pub fn adversary_model(&self) -> AdversaryModel {
        AdversaryModel::new(self.corrupted.iter().map(|&i| i - 1), self.eavesdropper)
    }

    pub fn privacy_curve_config(&self) -> PrivacyCurveConfig {
        PrivacyCurveConfig {
            sigma2_levels: self.sigma2_list.clone(),
            trials: self.trials,
            iterations: self.curve_iterations,
            bins: self.curve_bins,
            c: self.c,
            gamma: self.gamma,
            bits: self.bits,
            designated: self.designated.map(|i| i - 1),
            delta0_override: self.delta0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_match_the_experimental_settings() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.n, 30);
        assert_eq!(cfg.c, 0.9);
        assert_eq!(cfg.gamma, 0.9);
        assert_eq!(cfg.bits, 1);
        assert_eq!(cfg.sigma2_z0, 1.0);
        assert_eq!(cfg.effective_delta0(), 1.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# experiment\nn = 12\ntheta = 0.5\nsigma2_list = 1, 100").unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(file.path()).unwrap();
        assert_eq!(cfg.n, 12);
        assert_eq!(cfg.theta, 0.5);
        assert_eq!(cfg.sigma2_list, vec![1.0, 100.0]);
        // a later flag override wins
        cfg.set("theta", "0.25").unwrap();
        assert_eq!(cfg.theta, 0.25);
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(ConfigError::UnknownKey { .. })));
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "just some text").unwrap();
        assert!(matches!(
            ExperimentConfig::default().apply_file(file.path()),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.theta = 1.5;
        match cfg.validate() {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "theta"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let mut cfg = ExperimentConfig::default();
        cfg.corrupted = vec![31];
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::Validation { field: "corrupted", .. })
        ));
        let mut cfg = ExperimentConfig::default();
        cfg.sigma2_z0 = 0.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Validation { field: "delta0", .. })));
        cfg.quantize = false;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn resolved_dimensions_per_application() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.resolved_u(), 1);
        cfg.application = Application::LeastSquares;
        assert_eq!(cfg.resolved_u(), 3);
        cfg.u = Some(2);
        assert_eq!(cfg.resolved_u(), 2);
    }

    #[test]
    fn corrupted_ids_convert_to_zero_based() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("corrupted", "1, 5, 7").unwrap();
        cfg.set("eavesdropper", "true").unwrap();
        let model = cfg.adversary_model();
        assert!(model.is_corrupted(0) && model.is_corrupted(4) && model.is_corrupted(6));
        assert!(model.eavesdropper);
    }
}
