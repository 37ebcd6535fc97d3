//! Scalar evaluation metrics: output correctness (MSE against the
//! centralized optimum), communication-cost accounting, and threshold search
//! over a run trace.

use thiserror::Error;

use crate::optimizer::IterationRecord;
use crate::problem::Solution;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0} estimates vs {1} optima")]
    NodeCount(usize, usize),
    #[error("dimension mismatch at node {0}: {1} vs {2} coordinates")]
    Coordinates(usize, usize, usize),
}

/// Summed squared distance of the per-node estimates to the optimum:
/// `sum_i ||x_i - x_i*||^2`.
pub fn mse(x: &[Vec<f64>], x_star: &Solution) -> Result<f64, MetricsError> {
    if x.len() != x_star.x_star.len() {
        return Err(MetricsError::NodeCount(x.len(), x_star.x_star.len()));
    }
    let mut total = 0.0;
    for (i, (xi, xsi)) in x.iter().zip(&x_star.x_star).enumerate() {
        if xi.len() != xsi.len() {
            return Err(MetricsError::Coordinates(i, xi.len(), xsi.len()));
        }
        total += xi.iter().zip(xsi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Total transmitted bits after `iterations` quantized rounds:
/// `2m u init_bits + T (2m) l u`.
pub fn comm_cost(
    iterations: u64,
    edges: u64,
    bits_per_scalar: u64,
    dimension: u64,
    init_bits_per_scalar: u64,
) -> u64 {
    2 * edges * dimension * init_bits_per_scalar
        + iterations * 2 * edges * bits_per_scalar * dimension
}

/// First iteration whose MSE is at or below `eps`, if any.
pub fn iterations_to_threshold(trace: &[IterationRecord], eps: f64) -> Option<usize> {
    assert!(eps > 0.0, "threshold must be positive");
    trace.iter().find(|r| r.mse <= eps).map(|r| r.t)
}
