//! Deterministic simulator for communication-efficient privacy-preserving
//! distributed optimization over networks.
//!
//! The crate runs theta-parameterized PDMM/ADMM iterations on random geometric
//! graphs, exchanges auxiliary variables through an adaptive differential
//! quantizer with geometrically shrinking cells, logs every transmitted message
//! in a [`optimizer::Transcript`] with its bit cost and encryption visibility,
//! and reconstructs what a passive or eavesdropping adversary can infer about
//! a node's private data from that transcript.
//!
//! Module map:
//! - [`graph`]: connected random geometric graphs and incidence signs
//! - [`problem`]: average consensus and least-squares objectives with
//!   closed-form local updates and centralized ground-truth oracles
//! - [`quantizer`]: uniform mid-rise scalar quantizer and differential codec
//! - [`optimizer`]: the synchronous-round protocol, transcript and trace
//! - [`privacy`]: noise calibration, rate bounds, adversary views,
//!   mutual-information estimation
//! - [`metrics`]: MSE, communication-cost accounting, threshold search
//! - [`seeds`]: labeled substream derivation from a master seed

pub mod graph;
pub mod metrics;
pub mod optimizer;
pub mod privacy;
pub mod problem;
pub mod quantizer;
pub mod seeds;

pub use graph::Graph;
pub use optimizer::{OptimizerConfig, RunResult, Transcript};
pub use problem::{Problem, Solution};
pub use quantizer::QuantizerConfig;
