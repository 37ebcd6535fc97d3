//! The theta-parameterized PDMM/ADMM protocol with adaptive differential
//! quantization, run in synchronous rounds over a graph.
//!
//! theta = 0 gives Peaceman-Rachford splitting (PDMM), theta = 1/2 gives
//! Douglas-Rachford splitting (ADMM). Each round every node updates its primal
//! from the reconstructions it received, refreshes each outgoing auxiliary
//! value, quantizes the difference to the receiver's current reconstruction,
//! and transmits the code. Sends are delivered only after every node finishes
//! the round. Every message is logged in the [`Transcript`] with its bit cost
//! and encryption visibility: the auxiliary initialization travels encrypted
//! at high precision, everything afterwards is plain quantized traffic.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::metrics;
use crate::problem::{self, Problem, ProblemError, Solution};
use crate::quantizer::{self, CodeWord, QuantizerConfig, QuantizerError};
use crate::seeds;

/// Factor by which the MSE may exceed its running minimum before the run is
/// declared divergent.
const DIVERGENCE_FACTOR: f64 = 1e6;

fn mse_diverged(mse: f64, min_mse: f64) -> bool {
    min_mse > 0.0 && min_mse.is_finite() && mse > DIVERGENCE_FACTOR * min_mse
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("graph must be connected")]
    DisconnectedGraph,
    #[error("non-finite value at node {node} in iteration {iteration}")]
    NonFinite { node: NodeId, iteration: usize },
    #[error("divergence at iteration {iteration}: mse {mse:.3e} exceeds {factor:.0e} x its minimum {min_mse:.3e}")]
    Divergence { iteration: usize, mse: f64, min_mse: f64, factor: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// How a run decides it is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopRule {
    /// Stop when the MSE against the centralized optimum drops below the
    /// threshold (the optimum is known to the simulator).
    OracleMse,
    /// Oracle-free surrogate: stop when successive primal iterates differ by
    /// less than the threshold in squared norm.
    SuccessiveDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerConfig {
    /// Operator-averaging constant in [0, 1); 0 = PDMM, 1/2 = ADMM.
    pub theta: f64,
    /// Penalty constant, > 0.
    pub c: f64,
    /// Cap on the number of iterations.
    pub max_iters: usize,
    /// Stop threshold interpreted per `stop_rule`.
    pub mse_threshold: f64,
    /// Variance of the Gaussian auxiliary initialization.
    pub sigma2_z0: f64,
    /// Accounted bits per scalar for high-precision (initialization and
    /// passthrough) transmissions.
    pub init_bits_per_scalar: u64,
    pub stop_rule: StopRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            c: 0.9,
            max_iters: 500,
            mse_threshold: 1e-12,
            sigma2_z0: 1.0,
            init_bits_per_scalar: 64,
            stop_rule: StopRule::OracleMse,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.theta >= 0.0 && self.theta < 1.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "theta must lie in [0, 1), got {}",
                self.theta
            )));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(OptimizerError::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if !(self.sigma2_z0 >= 0.0) || !self.sigma2_z0.is_finite() {
            return Err(OptimizerError::InvalidConfig(format!(
                "sigma2_z0 must be non-negative, got {}",
                self.sigma2_z0
            )));
        }
        if !(self.mse_threshold >= 0.0) {
            return Err(OptimizerError::InvalidConfig(format!(
                "mse_threshold must be non-negative, got {}",
                self.mse_threshold
            )));
        }
        Ok(())
    }
}

/// Per-node protocol state. All three maps are keyed by the neighbor set.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Current primal iterate.
    pub x: Vec<f64>,
    /// Own latest unquantized auxiliary value per outgoing edge (to neighbor `j`).
    pub z_out: BTreeMap<NodeId, Vec<f64>>,
    /// Reconstruction of the auxiliary value received from each neighbor.
    pub z_hat_in: BTreeMap<NodeId, Vec<f64>>,
    /// Mirror of each receiver's reconstruction of this node's value; the
    /// basis for the next differential encoding.
    pub z_hat_out: BTreeMap<NodeId, Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    InitZ,
    QuantizedV,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    /// High-precision scalars: initialization values, or passthrough differences.
    Reals(Vec<f64>),
    /// Quantizer cell indices, one per coordinate.
    Codes(Vec<CodeWord>),
}

/// One transmitted message. Node ids are 0-based in memory; the JSON export
/// is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    /// Iteration stamp: 0 for initialization, `t >= 1` for quantized traffic.
    pub t: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    pub payload: Payload,
    pub encrypted: bool,
    pub bits: u64,
}

/// Ordered log of every transmitted message; the single source of truth for
/// communication accounting and adversary analysis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

#[derive(Serialize)]
struct MessageJson<'a> {
    t: usize,
    from: usize,
    to: usize,
    kind: MessageKind,
    payload: &'a Payload,
    encrypted: bool,
    bits: u64,
}

impl Transcript {
    pub fn total_bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits).sum()
    }

    pub fn quantized_bits(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.kind == MessageKind::QuantizedV)
            .map(|m| m.bits)
            .sum()
    }

    /// Full message log as JSON, node ids 1-based.
    pub fn to_json(&self) -> String {
        let docs: Vec<MessageJson> = self
            .messages
            .iter()
            .map(|m| MessageJson {
                t: m.t,
                from: m.from + 1,
                to: m.to + 1,
                kind: m.kind,
                payload: &m.payload,
                encrypted: m.encrypted,
                bits: m.bits,
            })
            .collect();
        serde_json::to_string_pretty(&docs).expect("transcript serialization cannot fail")
    }

    /// Code indices of all quantized messages packed at exactly their bit
    /// width, most significant bit first.
    pub fn pack_codes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut acc: u64 = 0;
        let mut filled: u32 = 0;
        for m in &self.messages {
            if let Payload::Codes(codes) = &m.payload {
                let width = (m.bits / codes.len() as u64) as u32;
                for code in codes {
                    for bit in (0..width).rev() {
                        acc = (acc << 1) | ((code.0 >> bit) & 1);
                        filled += 1;
                        if filled == 8 {
                            out.push(acc as u8);
                            acc = 0;
                            filled = 0;
                        }
                    }
                }
            }
        }
        if filled > 0 {
            out.push((acc << (8 - filled)) as u8);
        }
        out
    }
}

/// Per-iteration record of the run trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Iteration index, starting at 1.
    pub t: usize,
    /// Squared distance of the primal stack to the centralized optimum.
    pub mse: f64,
    /// Cumulative transmitted bits including initialization.
    pub cum_bits_total: u64,
    /// Cumulative quantized-phase bits only.
    pub cum_bits_quantized: u64,
    /// Squared norm of this iteration's quantization noise over all edges.
    pub quant_noise_sq: f64,
    /// Largest first-order optimality residual across nodes this iteration.
    pub fixed_point_residual: f64,
    /// Differences that fell outside the granular range this iteration.
    pub overload_count: usize,
}

/// Internal trajectories retained for privacy analysis and replay checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunInternals {
    /// `x_history[r][i]` is node `i`'s primal after round `r`, i.e. `x^(r+1)`.
    pub x_history: Vec<Vec<Vec<f64>>>,
    /// `nq_history[r][(i, j)]` is the quantization noise of the difference
    /// sent from `i` to `j` in round `r` (iteration `r + 1`).
    pub nq_history: Vec<BTreeMap<(NodeId, NodeId), Vec<f64>>>,
    /// Initialization values keyed by (sender, receiver).
    pub z0: BTreeMap<(NodeId, NodeId), Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Vec<IterationRecord>,
    pub final_x: Vec<Vec<f64>>,
    pub transcript: Transcript,
    /// First iteration at which the stop rule fired, if any.
    pub converged_at: Option<usize>,
    /// Centralized optimum used for the MSE trace.
    pub x_star: Solution,
    pub internals: RunInternals,
    /// Configs the run was executed with, for downstream replay.
    pub optimizer_config: OptimizerConfig,
    pub quantizer_config: QuantizerConfig,
}

impl RunResult {
    /// Realized iteration count.
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_mse(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.mse)
    }

    /// Trace as CSV with the stable schema
    /// `t,mse,cum_bits_total,cum_bits_quantized,quant_noise_sq`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,mse,cum_bits_total,cum_bits_quantized,quant_noise_sq\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:e},{},{},{:e}\n",
                r.t, r.mse, r.cum_bits_total, r.cum_bits_quantized, r.quant_noise_sq
            ));
        }
        out
    }
}

/// Draws every directed edge's initialization value i.i.d. zero-mean Gaussian
/// with variance `sigma2_z0` and logs it as an encrypted high-precision
/// message; the receiver stores it as the basis for reconstruction.
/// Deterministic given the seed.
pub fn initialize(
    graph: &Graph,
    problem: &Problem,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<(Vec<NodeState>, Transcript), OptimizerError> {
    if !graph.is_connected() {
        return Err(OptimizerError::DisconnectedGraph);
    }
    let u = problem.u();
    let sigma = config.sigma2_z0.sqrt();
    let mut rng = seeds::rng_for(seed, 0);
    let mut states: Vec<NodeState> = (0..graph.n())
        .map(|_| NodeState {
            x: vec![0.0; u],
            z_out: BTreeMap::new(),
            z_hat_in: BTreeMap::new(),
            z_hat_out: BTreeMap::new(),
        })
        .collect();
    let mut transcript = Transcript::default();
    for i in 0..graph.n() {
        for &j in graph.neighbors(i) {
            let value: Vec<f64> = (0..u)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                })
                .collect();
            states[i].z_out.insert(j, value.clone());
            states[i].z_hat_out.insert(j, value.clone());
            states[j].z_hat_in.insert(i, value.clone());
            transcript.messages.push(Message {
                t: 0,
                from: i,
                to: j,
                kind: MessageKind::InitZ,
                payload: Payload::Reals(value),
                encrypted: true,
                bits: config.init_bits_per_scalar * u as u64,
            });
        }
    }
    Ok((states, transcript))
}

/// What one synchronous round produced.
#[derive(Debug)]
pub struct RoundOutcome {
    pub messages: Vec<Message>,
    pub quant_noise_sq: f64,
    pub fixed_point_residual: f64,
    pub overload_count: usize,
    pub nq: BTreeMap<(NodeId, NodeId), Vec<f64>>,
}

/// Runs round `t` (0-based): primal updates from the current reconstructions,
/// auxiliary refresh, differential quantization, and deferred delivery.
/// Round `t` completes iteration `t + 1`; its messages carry that stamp.
pub fn iterate_once(
    states: &mut [NodeState],
    graph: &Graph,
    problem: &Problem,
    config: &OptimizerConfig,
    quantizer: &QuantizerConfig,
    t: usize,
) -> Result<RoundOutcome, OptimizerError> {
    let u = problem.u();
    let c = config.c;

    // primal updates, all from last round's reconstructions
    let mut residual_max = 0.0f64;
    for i in 0..graph.n() {
        let d_i = graph.degree(i);
        let mut z_sum = vec![0.0; u];
        for (&k, z) in &states[i].z_hat_in {
            let sign = graph.incidence_sign(i, k).expect("neighbor map matches graph").value();
            for (acc, v) in z_sum.iter_mut().zip(z) {
                *acc += sign * v;
            }
        }
        let x_new = problem::local_x_update(problem, i, &z_sum, c, d_i)?;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(OptimizerError::NonFinite { node: i, iteration: t + 1 });
        }
        let grad = problem::subgradient(problem, i, &x_new);
        let residual = (0..u)
            .map(|k| (grad[k] + z_sum[k] + c * d_i as f64 * x_new[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        residual_max = residual_max.max(residual);
        states[i].x = x_new;
    }

    // auxiliary refresh and differential encoding; the first round applies the
    // plain update, later rounds theta-average against the node's own
    // unquantized previous value
    let effective_theta = if t == 0 { 0.0 } else { config.theta };
    let mut messages = Vec::with_capacity(2 * graph.edge_count());
    let mut staged: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(2 * graph.edge_count() * u);
    let mut nq_map: BTreeMap<(NodeId, NodeId), Vec<f64>> = BTreeMap::new();
    let mut quant_noise_sq = 0.0;
    let mut overload_count = 0;
    for i in 0..graph.n() {
        let x_i = states[i].x.clone();
        let neighbors: Vec<NodeId> = states[i].z_out.keys().copied().collect();
        for j in neighbors {
            let sign = graph.incidence_sign(i, j).expect("neighbor map matches graph").value();
            let received = states[i].z_hat_in[&j].clone();
            let z_prev = &states[i].z_out[&j];
            let z_new: Vec<f64> = (0..u)
                .map(|k| {
                    effective_theta * z_prev[k]
                        + (1.0 - effective_theta) * (received[k] + 2.0 * c * sign * x_i[k])
                })
                .collect();
            if z_new.iter().any(|v| !v.is_finite()) {
                return Err(OptimizerError::NonFinite { node: i, iteration: t + 1 });
            }
            let mut codes = Vec::with_capacity(u);
            let mut reals = Vec::with_capacity(u);
            let mut noise = Vec::with_capacity(u);
            {
                let basis = states[i].z_hat_out.get_mut(&j).expect("edge state");
                for k in 0..u {
                    let out = quantizer::encode_difference(z_new[k], basis[k], t + 1, quantizer)?;
                    quant_noise_sq += out.noise * out.noise;
                    if out.overloaded {
                        overload_count += 1;
                    }
                    noise.push(out.noise);
                    match out.code {
                        Some(code) => codes.push(code),
                        None => reals.push(out.diff),
                    }
                    // sender mirrors the receiver's reconstruction arithmetic
                    basis[k] += out.reproduced;
                    staged.push((i, j, out.reproduced));
                }
            }
            states[i].z_out.insert(j, z_new);
            nq_map.insert((i, j), noise);
            let (payload, bits) = if quantizer.enabled {
                (Payload::Codes(codes), quantizer.bits as u64 * u as u64)
            } else {
                (Payload::Reals(reals), config.init_bits_per_scalar * u as u64)
            };
            messages.push(Message {
                t: t + 1,
                from: i,
                to: j,
                kind: MessageKind::QuantizedV,
                payload,
                encrypted: false,
                bits,
            });
        }
    }

    // deferred synchronous delivery
    let mut cursor: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for (from, to, reproduced) in staged {
        let k = *cursor.entry((from, to)).and_modify(|k| *k += 1).or_insert(0);
        states[to].z_hat_in.get_mut(&from).expect("edge state")[k] += reproduced;
    }

    Ok(RoundOutcome {
        messages,
        quant_noise_sq,
        fixed_point_residual: residual_max,
        overload_count,
        nq: nq_map,
    })
}

/// Full protocol run: initialization, synchronous rounds until the stop rule
/// fires or `max_iters` is reached, with a divergence guard. Deterministic
/// given the seed.
pub fn run(
    graph: &Graph,
    problem: &Problem,
    config: &OptimizerConfig,
    quantizer: &QuantizerConfig,
    seed: u64,
) -> Result<RunResult, OptimizerError> {
    config.validate()?;
    quantizer.validate()?;
    let x_star = problem::global_optimum(problem, graph)?;
    let (mut states, mut transcript) = initialize(graph, problem, config, seed)?;

    let mut internals = RunInternals::default();
    for m in &transcript.messages {
        if let Payload::Reals(v) = &m.payload {
            internals.z0.insert((m.from, m.to), v.clone());
        }
    }

    let mut trace = Vec::new();
    let mut converged_at = None;
    let mut min_mse = f64::INFINITY;
    let mut cum_total = transcript.total_bits();
    let mut cum_quant = 0u64;
    let mut prev_x: Option<Vec<Vec<f64>>> = None;

    for t in 0..config.max_iters {
        let outcome = iterate_once(&mut states, graph, problem, config, quantizer, t)?;
        cum_quant += outcome.messages.iter().map(|m| m.bits).sum::<u64>();
        cum_total += outcome.messages.iter().map(|m| m.bits).sum::<u64>();
        transcript.messages.extend(outcome.messages);

        let x_now: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        let mse = metrics::mse(&x_now, &x_star).expect("dimensions fixed by construction");
        trace.push(IterationRecord {
            t: t + 1,
            mse,
            cum_bits_total: cum_total,
            cum_bits_quantized: cum_quant,
            quant_noise_sq: outcome.quant_noise_sq,
            fixed_point_residual: outcome.fixed_point_residual,
            overload_count: outcome.overload_count,
        });
        internals.x_history.push(x_now.clone());
        internals.nq_history.push(outcome.nq);

        min_mse = min_mse.min(mse);
        if mse_diverged(mse, min_mse) {
            return Err(OptimizerError::Divergence {
                iteration: t + 1,
                mse,
                min_mse,
                factor: DIVERGENCE_FACTOR,
            });
        }

        let stop = match config.stop_rule {
            StopRule::OracleMse => mse < config.mse_threshold,
            StopRule::SuccessiveDiff => prev_x
                .as_ref()
                .map(|prev| {
                    let diff: f64 = prev
                        .iter()
                        .flatten()
                        .zip(x_now.iter().flatten())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    diff < config.mse_threshold
                })
                .unwrap_or(false),
        };
        prev_x = Some(x_now);
        if stop {
            converged_at = Some(t + 1);
            break;
        }
    }

    Ok(RunResult {
        trace,
        final_x: states.iter().map(|s| s.x.clone()).collect(),
        transcript,
        converged_at,
        x_star,
        internals,
        optimizer_config: *config,
        quantizer_config: *quantizer,
    })
}
