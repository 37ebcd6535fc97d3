//! Privacy analysis: noise calibration for a target information leakage,
//! rate/entropy bounds for obfuscated data, reconstruction of what passive and
//! eavesdropping adversaries observe from a run transcript, and plug-in
//! histogram estimation of mutual information for empirical privacy curves.
//!
//! The adversary view is computed twice on purpose: once from nothing but the
//! messages visible to the adversary, and once directly from the honest node's
//! internals. The two routes must agree to within 1e-9; a mismatch is an
//! internal error, never silently ignored.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::optimizer::{MessageKind, OptimizerConfig, Payload, RunResult, StopRule};
use crate::problem::{self, ConsensusProblem, Problem};
use crate::quantizer::{self, QuantizerConfig};
use crate::seeds;

const VIEW_EQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sample vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite sample value")]
    NonFiniteSample,
    #[error("invalid adversary model: {0}")]
    Model(String),
    #[error("node {0} is corrupted, not honest")]
    NodeNotHonest(NodeId),
    #[error("honest node {0} has no corrupted neighbor")]
    NoCorruptedNeighbors(NodeId),
    #[error("iteration {t} outside the analyzable range 1..={max}")]
    IterationOutOfRange { t: usize, max: usize },
    #[error("adversary cannot see the required messages: {0}")]
    NotVisible(String),
    #[error("adversary analysis requires theta = 0 runs, got theta = {0}")]
    UnsupportedTheta(f64),
    #[error(
        "transcript reconstruction disagrees with the direct computation at node {node}, \
         neighbor {neighbor}, iteration {t}: |difference| = {difference:.3e}"
    )]
    ReconstructionMismatch { node: NodeId, neighbor: NodeId, t: usize, difference: f64 },
    #[error("no honest node with exactly one honest neighbor; honest nodes with (honest-neighbor count): {candidates:?}")]
    NoQualifyingNode { candidates: Vec<(NodeId, usize)> },
    #[error("designated node {0} does not have exactly one honest neighbor")]
    BadDesignatedNode(NodeId),
    #[error(transparent)]
    Optimizer(#[from] crate::optimizer::OptimizerError),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
}

/// Which nodes collude, and whether the channel listener is present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryModel {
    pub corrupted: BTreeSet<NodeId>,
    /// Listens to every message on non-encrypted channels.
    pub eavesdropper: bool,
}

impl AdversaryModel {
    pub fn new(corrupted: impl IntoIterator<Item = NodeId>, eavesdropper: bool) -> Self {
        Self { corrupted: corrupted.into_iter().collect(), eavesdropper }
    }

    pub fn validate(&self, graph: &Graph) -> Result<(), PrivacyError> {
        if let Some(&bad) = self.corrupted.iter().find(|&&i| i >= graph.n()) {
            return Err(PrivacyError::Model(format!("corrupted node {bad} out of range")));
        }
        if self.corrupted.len() >= graph.n() {
            return Err(PrivacyError::Model("honest set would be empty".into()));
        }
        Ok(())
    }

    pub fn is_corrupted(&self, i: NodeId) -> bool {
        self.corrupted.contains(&i)
    }

    /// True when at least one endpoint is corrupted, i.e. every message on
    /// the edge is known to the passive adversary.
    pub fn edge_is_corrupted(&self, a: NodeId, b: NodeId) -> bool {
        self.is_corrupted(a) || self.is_corrupted(b)
    }
}

/// Desired leakage bound and data scale for noise calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyTarget {
    /// Information-leakage bound in bits, > 0.
    pub delta_bits: f64,
    /// Private-data variance.
    pub sigma2_s: f64,
}

/// Smallest Gaussian noise variance that keeps the mutual information between
/// the private datum and its obfuscation at or below `delta` bits:
/// `sigma2_s / (2^(2 delta) - 1)`.
pub fn required_noise_variance(delta: f64, sigma2_s: f64) -> Result<f64, PrivacyError> {
    if !(delta > 0.0) {
        return Err(PrivacyError::InvalidParameter(format!(
            "leakage bound must be positive, got {delta}"
        )));
    }
    if !(sigma2_s > 0.0) {
        return Err(PrivacyError::InvalidParameter(format!(
            "sigma2_s must be positive, got {sigma2_s}"
        )));
    }
    Ok(sigma2_s / (2f64.powf(2.0 * delta) - 1.0))
}

/// Mutual information in bits between jointly Gaussian `S` and `S + R`:
/// `1/2 log2(1 + sigma2_s / sigma2_r)`. Exact inverse of
/// [`required_noise_variance`].
pub fn gaussian_mi(sigma2_s: f64, sigma2_r: f64) -> f64 {
    0.5 * (1.0 + sigma2_s / sigma2_r).log2()
}

/// Upper bound, in bits, on the entropy of the quantized obfuscated datum at
/// leakage level `delta`:
/// `1/2 log2(2 pi e 2^(2 delta) sigma2_s / ((2^(2 delta) - 1) cell_width^2))`.
pub fn min_bits_bound(delta: f64, sigma2_s: f64, cell_width: f64) -> f64 {
    let pow = 2f64.powf(2.0 * delta);
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * pow * sigma2_s
        / ((pow - 1.0) * cell_width * cell_width))
        .log2()
}

/// Plug-in histogram mutual-information estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    pub bits: f64,
    /// Set when one of the sample sets was constant and the estimate fell
    /// back to zero.
    pub degenerate: bool,
}

fn bin_index(v: f64, min: f64, max: f64, bins: usize) -> usize {
    let pos = ((v - min) / (max - min) * bins as f64) as usize;
    pos.min(bins - 1)
}

/// Mutual information in bits between two paired samples, estimated on a
/// `bins x bins` joint histogram with equal-width bins spanning each sample
/// range. Non-negative by construction; no bias correction is applied.
pub fn estimate_mi(
    samples_s: &[f64],
    samples_obs: &[f64],
    bins: usize,
) -> Result<MiEstimate, PrivacyError> {
    if samples_s.len() != samples_obs.len() {
        return Err(PrivacyError::LengthMismatch(samples_s.len(), samples_obs.len()));
    }
    if samples_s.len() < 2 {
        return Err(PrivacyError::TooFewSamples { need: 2, got: samples_s.len() });
    }
    if bins < 2 {
        return Err(PrivacyError::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if samples_s.iter().chain(samples_obs).any(|v| !v.is_finite()) {
        return Err(PrivacyError::NonFiniteSample);
    }
    let (s_min, s_max) = min_max(samples_s);
    let (o_min, o_max) = min_max(samples_obs);
    if s_min == s_max || o_min == o_max {
        return Ok(MiEstimate { bits: 0.0, degenerate: true });
    }
    let n = samples_s.len() as f64;
    let mut joint = vec![0u64; bins * bins];
    for (&s, &o) in samples_s.iter().zip(samples_obs) {
        let si = bin_index(s, s_min, s_max, bins);
        let oi = bin_index(o, o_min, o_max, bins);
        joint[si * bins + oi] += 1;
    }
    let mut s_marginal = vec![0u64; bins];
    let mut o_marginal = vec![0u64; bins];
    for si in 0..bins {
        for oi in 0..bins {
            s_marginal[si] += joint[si * bins + oi];
            o_marginal[oi] += joint[si * bins + oi];
        }
    }
    let mut mi = 0.0;
    for si in 0..bins {
        for oi in 0..bins {
            let c = joint[si * bins + oi];
            if c > 0 {
                let p = c as f64 / n;
                let ps = s_marginal[si] as f64 / n;
                let po = o_marginal[oi] as f64 / n;
                mi += p * (p / (ps * po)).log2();
            }
        }
    }
    Ok(MiEstimate { bits: mi.max(0.0), degenerate: false })
}

/// Plug-in entropy, in bits, of a sample on `bins` equal-width bins.
pub fn plugin_entropy(samples: &[f64], bins: usize) -> f64 {
    let (min, max) = min_max(samples);
    if min == max || samples.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0u64; bins];
    for &v in samples {
        counts[bin_index(v, min, max, bins)] += 1;
    }
    let n = samples.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// What the adversary learns about one honest node through one corrupted
/// neighbor at one iteration, together with the direct recomputation from the
/// honest node's internals.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryView {
    pub honest_node: NodeId,
    pub corrupted_neighbor: NodeId,
    pub t: usize,
    /// Reconstructed purely from adversary-visible messages.
    pub observed: Vec<f64>,
    /// Recomputed from the honest node's internals; equals `observed` to 1e-9.
    pub direct: Vec<f64>,
}

/// Per-run adversary workspace: reconstruction tables built once from the
/// transcript restricted to what the model can see.
pub struct AdversaryAnalysis<'a> {
    run: &'a RunResult,
    model: &'a AdversaryModel,
    problem: &'a Problem,
    graph: &'a Graph,
    /// Cumulative reproduction sums per visible directed edge:
    /// `vhat_cum[(a, b)][t][k]` is the sum of decoded differences through
    /// iteration `t` (index 0 is the zero vector).
    vhat_cum: std::collections::BTreeMap<(NodeId, NodeId), Vec<Vec<f64>>>,
    /// Initialization values on corrupted edges.
    z0_visible: std::collections::BTreeMap<(NodeId, NodeId), Vec<f64>>,
    rounds: usize,
}

impl<'a> AdversaryAnalysis<'a> {
    pub fn new(
        run: &'a RunResult,
        model: &'a AdversaryModel,
        problem: &'a Problem,
        graph: &'a Graph,
    ) -> Result<Self, PrivacyError> {
        model.validate(graph)?;
        if run.optimizer_config.theta != 0.0 {
            return Err(PrivacyError::UnsupportedTheta(run.optimizer_config.theta));
        }
        let u = problem.u();
        let q = &run.quantizer_config;
        let mut vhat_cum = std::collections::BTreeMap::new();
        let mut z0_visible = std::collections::BTreeMap::new();
        for msg in &run.transcript.messages {
            let edge_corrupted = model.edge_is_corrupted(msg.from, msg.to);
            match msg.kind {
                MessageKind::InitZ => {
                    // encrypted: only the passive adversary on corrupted edges
                    if edge_corrupted {
                        if let Payload::Reals(v) = &msg.payload {
                            z0_visible.insert((msg.from, msg.to), v.clone());
                        }
                    }
                }
                MessageKind::QuantizedV => {
                    if !(edge_corrupted || model.eavesdropper) {
                        continue;
                    }
                    let entry: &mut Vec<Vec<f64>> = vhat_cum
                        .entry((msg.from, msg.to))
                        .or_insert_with(|| vec![vec![0.0; u]]);
                    let prev = entry.last().expect("seeded with zeros").clone();
                    let mut next = prev;
                    match &msg.payload {
                        Payload::Codes(codes) => {
                            for (k, code) in codes.iter().enumerate() {
                                next[k] += quantizer::reproduce(*code, q.cell_width(msg.t), q.bits)
                                    .expect("transcript codes are in range");
                            }
                        }
                        Payload::Reals(vals) => {
                            for (k, v) in vals.iter().enumerate() {
                                next[k] += v;
                            }
                        }
                    }
                    entry.push(next);
                }
            }
        }
        Ok(Self { run, model, problem, graph, vhat_cum, z0_visible, rounds: run.trace.len() })
    }

    /// Latest iteration for which views can be formed.
    pub fn max_view_iteration(&self) -> usize {
        self.rounds.saturating_sub(1)
    }

    fn cum_vhat(&self, from: NodeId, to: NodeId, t: usize) -> Result<&[f64], PrivacyError> {
        let series = self.vhat_cum.get(&(from, to)).ok_or_else(|| {
            PrivacyError::NotVisible(format!(
                "differences on edge {from}->{to} (enable the eavesdropper or corrupt an endpoint)"
            ))
        })?;
        series.get(t).map(Vec::as_slice).ok_or(PrivacyError::IterationOutOfRange {
            t,
            max: series.len().saturating_sub(1),
        })
    }

    fn zhat(&self, from: NodeId, to: NodeId, t: usize) -> Result<Vec<f64>, PrivacyError> {
        let z0 = self.z0_visible.get(&(from, to)).ok_or_else(|| {
            PrivacyError::NotVisible(format!(
                "initialization on edge {from}->{to} is encrypted and neither endpoint is corrupted"
            ))
        })?;
        let cum = self.cum_vhat(from, to, t)?;
        Ok(z0.iter().zip(cum).map(|(a, b)| a + b).collect())
    }

    /// Adversary views of honest node `i` at iteration `t >= 1`, one per
    /// corrupted neighbor. Each view is reconstructed from visible messages
    /// and checked against the direct computation from node internals.
    pub fn views_at(&self, i: NodeId, t: usize) -> Result<Vec<AdversaryView>, PrivacyError> {
        if self.model.is_corrupted(i) {
            return Err(PrivacyError::NodeNotHonest(i));
        }
        if t < 1 || t > self.max_view_iteration() {
            return Err(PrivacyError::IterationOutOfRange { t, max: self.max_view_iteration() });
        }
        let corrupted_neighbors: Vec<NodeId> = self
            .graph
            .neighbors(i)
            .iter()
            .copied()
            .filter(|&j| self.model.is_corrupted(j))
            .collect();
        if corrupted_neighbors.is_empty() {
            return Err(PrivacyError::NoCorruptedNeighbors(i));
        }
        let honest_neighbors: Vec<NodeId> = self
            .graph
            .neighbors(i)
            .iter()
            .copied()
            .filter(|&j| !self.model.is_corrupted(j))
            .collect();
        let u = self.problem.u();
        let d_i = self.graph.degree(i) as f64;
        let sign = |a: NodeId, b: NodeId| {
            self.graph.incidence_sign(a, b).expect("neighbors are adjacent").value()
        };

        // known corrupted-edge reconstructions at iteration t
        let mut known = vec![0.0; u];
        for &j in &corrupted_neighbors {
            let zh = self.zhat(j, i, t)?;
            let s = sign(i, j);
            for k in 0..u {
                known[k] += s * zh[k];
            }
        }
        // eavesdropped running sums on honest edges
        for &j in &honest_neighbors {
            let cum = self.cum_vhat(j, i, t)?;
            let s = sign(i, j);
            for k in 0..u {
                known[k] += s * cum[k];
            }
        }

        // direct route, shared across corrupted neighbors
        let x_next = &self.run.internals.x_history[t]; // x^(t+1)
        let grad = problem::subgradient(self.problem, i, &x_next[i]);
        let mut base = grad.clone();
        for &j in &honest_neighbors {
            let z0 = &self.run.internals.z0[&(j, i)];
            let s = sign(i, j);
            for k in 0..u {
                base[k] += s * z0[k];
            }
        }

        let mut views = Vec::with_capacity(corrupted_neighbors.len());
        for &k_node in &corrupted_neighbors {
            let s_ik = sign(i, k_node);
            let zh_out = self.zhat(i, k_node, t + 1)?;
            let zh_in = self.zhat(k_node, i, t)?;
            let observed: Vec<f64> = (0..u)
                .map(|k| -(known[k] + s_ik * (d_i / 2.0) * (zh_out[k] - zh_in[k])))
                .collect();
            let nq = &self.run.internals.nq_history[t][&(i, k_node)];
            let direct: Vec<f64> =
                (0..u).map(|k| base[k] - s_ik * (d_i / 2.0) * nq[k]).collect();
            for k in 0..u {
                let difference = (observed[k] - direct[k]).abs();
                if !(difference <= VIEW_EQUALITY_TOL) {
                    return Err(PrivacyError::ReconstructionMismatch {
                        node: i,
                        neighbor: k_node,
                        t,
                        difference,
                    });
                }
            }
            views.push(AdversaryView {
                honest_node: i,
                corrupted_neighbor: k_node,
                t,
                observed,
                direct,
            });
        }
        Ok(views)
    }
}

/// Convenience wrapper: adversary views of honest node `i` at iteration `t`
/// for a completed run.
pub fn adversary_observation(
    run: &RunResult,
    model: &AdversaryModel,
    problem: &Problem,
    graph: &Graph,
    i: NodeId,
    t: usize,
) -> Result<Vec<AdversaryView>, PrivacyError> {
    AdversaryAnalysis::new(run, model, problem, graph)?.views_at(i, t)
}

/// Parameters of the empirical privacy curve (scalar consensus application).
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyCurveConfig {
    /// Auxiliary-initialization variance levels to sweep; all positive.
    pub sigma2_levels: Vec<f64>,
    pub trials: usize,
    /// Views are collected at iterations `1..=iterations`.
    pub iterations: usize,
    /// Histogram bins for the NMI estimate.
    pub bins: usize,
    pub c: f64,
    pub gamma: f64,
    pub bits: u32,
    /// Honest node whose privacy is measured; picked automatically (lowest
    /// index with exactly one honest neighbor) when absent.
    pub designated: Option<NodeId>,
    /// Decouples the initial cell width from `sqrt(sigma2)` when set.
    pub delta0_override: Option<f64>,
}

impl Default for PrivacyCurveConfig {
    fn default() -> Self {
        Self {
            sigma2_levels: vec![1.0, 1e2, 1e4],
            trials: 1000,
            iterations: 25,
            bins: 8,
            c: 0.9,
            gamma: 0.9,
            bits: 1,
            designated: None,
            delta0_override: None,
        }
    }
}

/// One row of the privacy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NmiPoint {
    pub sigma2_z0: f64,
    pub t: usize,
    pub nmi: f64,
    pub mi_bits: f64,
    pub trials: usize,
}

/// Honest nodes with no honest neighbor at all. Their view degenerates to the
/// subgradient masked only by vanishing quantization noise, so the protocol
/// cannot protect them; callers should refuse or warn.
pub fn unprotected_nodes(graph: &Graph, model: &AdversaryModel) -> Vec<NodeId> {
    (0..graph.n())
        .filter(|&i| !model.is_corrupted(i))
        .filter(|&i| graph.neighbors(i).iter().all(|&j| model.is_corrupted(j)))
        .collect()
}

/// Finds honest nodes with exactly one honest neighbor and at least one
/// corrupted neighbor under `model` (the worst admissible case for an honest
/// node's privacy).
pub fn qualifying_nodes(graph: &Graph, model: &AdversaryModel) -> Vec<NodeId> {
    (0..graph.n())
        .filter(|&i| !model.is_corrupted(i))
        .filter(|&i| {
            let honest =
                graph.neighbors(i).iter().filter(|&&j| !model.is_corrupted(j)).count();
            honest == 1 && graph.degree(i) > 1
        })
        .collect()
}

/// Runs `trials` independent protocol executions per noise level with fresh
/// private data and fresh initialization, collects the adversary's view of a
/// designated honest node that has exactly one honest neighbor, and reports
/// the normalized mutual information between the node's private datum and the
/// observation at each iteration.
///
/// Pairs from all corrupted neighbors are pooled into one estimate per
/// `(level, t)`. Trials share substreams across levels, so levels differ only
/// by the noise scale.
pub fn empirical_privacy_curve(
    graph: &Graph,
    model: &AdversaryModel,
    cfg: &PrivacyCurveConfig,
    seed: u64,
) -> Result<Vec<NmiPoint>, PrivacyError> {
    model.validate(graph)?;
    if cfg.trials == 0 {
        return Err(PrivacyError::InvalidParameter("trials must be positive".into()));
    }
    if cfg.iterations == 0 {
        return Err(PrivacyError::InvalidParameter("iterations must be positive".into()));
    }
    if cfg.sigma2_levels.is_empty() || cfg.sigma2_levels.iter().any(|&v| !(v > 0.0)) {
        return Err(PrivacyError::InvalidParameter(
            "sigma2 levels must be positive (use delta0_override to probe degenerate noise)"
                .into(),
        ));
    }
    let designated = match cfg.designated {
        Some(node) => {
            if !qualifying_nodes(graph, model).contains(&node) {
                return Err(PrivacyError::BadDesignatedNode(node));
            }
            node
        }
        None => *qualifying_nodes(graph, model).first().ok_or_else(|| {
            let candidates = (0..graph.n())
                .filter(|&i| !model.is_corrupted(i))
                .map(|i| {
                    let honest = graph
                        .neighbors(i)
                        .iter()
                        .filter(|&&j| !model.is_corrupted(j))
                        .count();
                    (i, honest)
                })
                .collect();
            PrivacyError::NoQualifyingNode { candidates }
        })?,
    };

    let mut levels = cfg.sigma2_levels.clone();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("levels are finite"));
    levels.dedup();

    let mut points = Vec::with_capacity(levels.len() * cfg.iterations);
    for &level in &levels {
        // pooled (private datum, observation) pairs per iteration
        let mut s_pool: Vec<Vec<f64>> = vec![Vec::new(); cfg.iterations + 1];
        let mut obs_pool: Vec<Vec<f64>> = vec![Vec::new(); cfg.iterations + 1];
        for trial in 0..cfg.trials {
            let trial_seed = seeds::derive_seed(seed, seeds::trial_stream(trial));
            let data_seed = seeds::derive_seed(trial_seed, seeds::STREAM_DATA);
            let zinit_seed = seeds::derive_seed(trial_seed, seeds::STREAM_ZINIT);
            let problem =
                Problem::Consensus(ConsensusProblem::sample_gaussian(graph.n(), 1, data_seed));
            let opt = OptimizerConfig {
                theta: 0.0,
                c: cfg.c,
                max_iters: cfg.iterations + 1,
                mse_threshold: 0.0,
                sigma2_z0: level,
                init_bits_per_scalar: 64,
                stop_rule: StopRule::OracleMse,
            };
            let quant = QuantizerConfig {
                bits: cfg.bits,
                delta0: cfg.delta0_override.unwrap_or_else(|| level.sqrt()),
                gamma: cfg.gamma,
                enabled: true,
            };
            let run = crate::optimizer::run(graph, &problem, &opt, &quant, zinit_seed)?;
            let analysis = AdversaryAnalysis::new(&run, model, &problem, graph)?;
            let private = problem.private_scalar(designated);
            for t in 1..=cfg.iterations {
                for view in analysis.views_at(designated, t)? {
                    s_pool[t].push(private);
                    obs_pool[t].push(view.observed[0]);
                }
            }
        }
        for t in 1..=cfg.iterations {
            let mi = estimate_mi(&s_pool[t], &obs_pool[t], cfg.bins)?;
            let entropy = plugin_entropy(&s_pool[t], cfg.bins);
            let nmi = if entropy > 0.0 { mi.bits / entropy } else { 0.0 };
            points.push(NmiPoint {
                sigma2_z0: level,
                t,
                nmi,
                mi_bits: mi.bits,
                trials: cfg.trials,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn noise_calibration_closed_forms() {
        // delta = 0.5, sigma2 = 1 -> beta = 1/(2^1 - 1) = 1
        assert!((required_noise_variance(0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // delta = 0.05 evaluated numerically: 1 / (2^0.1 - 1)
        let beta = required_noise_variance(0.05, 1.0).unwrap();
        assert!((beta - 13.932_726_172_912_972).abs() < 1e-9, "beta = {beta}");
        assert!(required_noise_variance(0.0, 1.0).is_err());
        assert!(required_noise_variance(-0.1, 1.0).is_err());
        // monotone decreasing in delta
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let b = required_noise_variance(k as f64 * 0.1, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn gaussian_mi_inverts_the_calibration() {
        assert!((gaussian_mi(1.0, 1.0) - 0.5).abs() < 1e-15);
        for delta in [0.1, 0.5, 1.0] {
            let beta = required_noise_variance(delta, 1.0).unwrap();
            assert!((gaussian_mi(1.0, beta) - delta).abs() < 1e-12);
        }
        assert!(gaussian_mi(1.0, 1e18) < 1e-12);
    }

    #[test]
    fn rate_bound_shape() {
        // doubling the cell width removes exactly one bit
        let a = min_bits_bound(0.5, 1.0, 1e-5);
        let b = min_bits_bound(0.5, 1.0, 2e-5);
        assert!((a - b - 1.0).abs() < 1e-12);
        // strictly decreasing in delta, increasing in sigma2_s
        assert!(min_bits_bound(0.6, 1.0, 1e-5) < a);
        assert!(min_bits_bound(0.5, 2.0, 1e-5) > a);
        // spot value at delta = 0.5: about 19.2 bits
        assert!((a - 19.2).abs() < 0.1, "bound = {a}");
    }

    #[test]
    fn mi_estimator_controls() {
        let mut rng = seeds::rng_for(123, 0);
        let n = 100_000;
        let s: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut rng);
        // independence: shuffled pairing stays near zero
        let indep = estimate_mi(&s, &shuffled, 64).unwrap();
        assert!(!indep.degenerate && indep.bits <= 0.05, "independent MI {}", indep.bits);
        // identity pairing saturates well above 3 bits at 64 bins
        let ident = estimate_mi(&s, &s, 64).unwrap();
        assert!(ident.bits > 3.0 && ident.bits <= 6.0, "identity MI {}", ident.bits);
    }

    #[test]
    fn mi_estimator_matches_gaussian_closed_form() {
        // scaled-down version of the calibration check (the acceptance suite
        // runs the full 1e6-sample version)
        let mut rng = seeds::rng_for(77, 0);
        let n = 200_000;
        let delta = 0.5;
        let beta = required_noise_variance(delta, 1.0).unwrap();
        let s: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let obs: Vec<f64> = s
            .iter()
            .map(|&v| {
                let r: f64 = StandardNormal.sample(&mut rng);
                v + beta.sqrt() * r
            })
            .collect();
        let est = estimate_mi(&s, &obs, 64).unwrap();
        assert!((est.bits - delta).abs() < 0.05, "estimate {}", est.bits);
    }

    #[test]
    fn mi_estimator_edge_cases() {
        assert!(matches!(
            estimate_mi(&[1.0], &[1.0, 2.0], 8),
            Err(PrivacyError::LengthMismatch(1, 2))
        ));
        assert!(estimate_mi(&[1.0], &[1.0], 8).is_err());
        let degenerate = estimate_mi(&[2.0; 100], &(0..100).map(|i| i as f64).collect::<Vec<_>>(), 8)
            .unwrap();
        assert!(degenerate.degenerate && degenerate.bits == 0.0);
        assert!(estimate_mi(&[f64::NAN, 1.0], &[0.0, 1.0], 8).is_err());
    }

    fn small_run(
        corrupted: &[NodeId],
        eavesdropper: bool,
        theta: f64,
    ) -> (Graph, Problem, RunResult, AdversaryModel) {
        let graph = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let problem = Problem::Consensus(ConsensusProblem::sample_gaussian(3, 1, 5));
        let opt = OptimizerConfig {
            theta,
            max_iters: 25,
            mse_threshold: 0.0,
            ..OptimizerConfig::default()
        };
        let quant = QuantizerConfig { bits: 1, delta0: 1.0, gamma: 0.9, enabled: true };
        let run = optimizer::run(&graph, &problem, &opt, &quant, 9).unwrap();
        let model = AdversaryModel::new(corrupted.iter().copied(), eavesdropper);
        (graph, problem, run, model)
    }

    #[test]
    fn path_graph_views_match_direct_computation() {
        // nodes 0 and 2 corrupted, honest node 1 in the middle: no honest
        // neighbors, so the passive adversary alone reconstructs the view,
        // which degenerates to subgradient minus the scaled quantization noise
        let (graph, problem, run, model) = small_run(&[0, 2], false, 0.0);
        assert_eq!(unprotected_nodes(&graph, &model), vec![1]);
        for t in 1..=20 {
            let views = adversary_observation(&run, &model, &problem, &graph, 1, t).unwrap();
            assert_eq!(views.len(), 2);
            for v in &views {
                assert!((v.observed[0] - v.direct[0]).abs() <= 1e-9);
                let grad = problem::subgradient(&problem, 1, &run.internals.x_history[t][1])[0];
                let sign = graph.incidence_sign(1, v.corrupted_neighbor).unwrap().value();
                let nq = run.internals.nq_history[t][&(1, v.corrupted_neighbor)][0];
                let expect = grad - sign * nq; // d_i / 2 = 1 on the path
                assert!((v.direct[0] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn passthrough_views_expose_subgradient_plus_initialization() {
        let graph = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let problem = Problem::Consensus(ConsensusProblem::sample_gaussian(3, 1, 5));
        let opt =
            OptimizerConfig { max_iters: 10, mse_threshold: 0.0, ..OptimizerConfig::default() };
        let quant = QuantizerConfig { bits: 1, delta0: 1.0, gamma: 0.9, enabled: false };
        let run = optimizer::run(&graph, &problem, &opt, &quant, 9).unwrap();
        // only node 0 corrupted; honest node 1 keeps honest neighbor 2, whose
        // running sums the eavesdropper supplies
        let model = AdversaryModel::new([0], true);
        let views = adversary_observation(&run, &model, &problem, &graph, 1, 3).unwrap();
        assert_eq!(views.len(), 1);
        // passthrough: nq = 0, so the view is exactly subgradient + sign * z0
        let x_next = &run.internals.x_history[3][1];
        let grad = problem::subgradient(&problem, 1, x_next)[0];
        let z0 = run.internals.z0[&(2, 1)][0];
        let sign = graph.incidence_sign(1, 2).unwrap().value();
        assert!((views[0].observed[0] - (grad + sign * z0)).abs() < 1e-9);
    }

    #[test]
    fn visibility_preconditions_are_enforced() {
        let (graph, problem, run, _) = small_run(&[0], true, 0.0);
        // corrupted node is not honest
        let model = AdversaryModel::new([0], true);
        assert!(matches!(
            adversary_observation(&run, &model, &problem, &graph, 0, 1),
            Err(PrivacyError::NodeNotHonest(0))
        ));
        // node 2 has no corrupted neighbor
        assert!(matches!(
            adversary_observation(&run, &model, &problem, &graph, 2, 1),
            Err(PrivacyError::NoCorruptedNeighbors(2))
        ));
        // honest-edge sums need the eavesdropper
        let passive_only = AdversaryModel::new([0], false);
        assert!(matches!(
            adversary_observation(&run, &passive_only, &problem, &graph, 1, 1),
            Err(PrivacyError::NotVisible(_))
        ));
        // theta > 0 runs are rejected
        let (graph, problem, run, model) = small_run(&[0, 2], false, 0.5);
        assert!(matches!(
            adversary_observation(&run, &model, &problem, &graph, 1, 1),
            Err(PrivacyError::UnsupportedTheta(_))
        ));
    }

    #[test]
    fn model_validation() {
        let graph = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(AdversaryModel::new([7], false).validate(&graph).is_err());
        assert!(AdversaryModel::new([0, 1, 2], false).validate(&graph).is_err());
        assert!(AdversaryModel::new([0, 2], true).validate(&graph).is_ok());
    }

    #[test]
    fn qualifying_node_detection_and_errors() {
        let graph = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        // corrupt 0 and 3: honest 1 and 2 each keep exactly one honest neighbor
        let model = AdversaryModel::new([0, 3], true);
        assert_eq!(qualifying_nodes(&graph, &model), vec![1, 2]);
        // corrupt only node 3: node 2 qualifies (honest neighbor 1, corrupted
        // neighbor 3); node 0's single neighbor is honest, so nothing can be
        // observed about it and it does not qualify
        let model = AdversaryModel::new([3], true);
        assert_eq!(qualifying_nodes(&graph, &model), vec![2]);
        // nobody qualifies on a triangle with no corruption
        let tri = Graph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let model = AdversaryModel::new([] as [usize; 0], true);
        let err = empirical_privacy_curve(
            &tri,
            &model,
            &PrivacyCurveConfig { trials: 2, iterations: 2, ..Default::default() },
            1,
        )
        .unwrap_err();
        assert!(matches!(err, PrivacyError::NoQualifyingNode { .. }));
    }

    #[test]
    fn privacy_curve_smoke_and_determinism() {
        let graph = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let model = AdversaryModel::new([0, 3], true);
        let cfg = PrivacyCurveConfig {
            sigma2_levels: vec![1e2, 1.0],
            trials: 40,
            iterations: 6,
            ..Default::default()
        };
        let a = empirical_privacy_curve(&graph, &model, &cfg, 3).unwrap();
        let b = empirical_privacy_curve(&graph, &model, &cfg, 3).unwrap();
        assert_eq!(a, b);
        // levels are sorted in the output regardless of input order
        assert!(a.windows(2).all(|w| w[0].sigma2_z0 <= w[1].sigma2_z0));
        assert_eq!(a.len(), 2 * 6);
        assert!(a.iter().all(|p| p.nmi >= 0.0 && p.trials == 40));
    }
}
