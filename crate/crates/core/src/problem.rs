//! Application objectives: distributed average consensus and distributed
//! least squares, with closed-form local updates, subgradients (the private
//! data carrier) and centralized ground-truth oracles.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::seeds;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stacked least-squares system is rank deficient")]
    RankDeficient,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("problem has {have} nodes but graph has {want}")]
    NodeCount { have: usize, want: usize },
    #[error("malformed problem JSON: {0}")]
    Json(String),
}

/// Average consensus: node `i` holds a private vector `s_i` and the network
/// seeks the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusProblem {
    pub u: usize,
    /// Per-node private vectors, each of dimension `u`.
    pub s: Vec<Vec<f64>>,
}

/// Least squares: node `i` holds a private observation block `(Q_i, y_i)` of a
/// linear system and the network seeks the stacked least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresProblem {
    pub u: usize,
    /// Per-node observation matrices, `p_i` rows of length `u`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// Per-node decision vectors of length `p_i`.
    pub y: Vec<Vec<f64>>,
}

/// One of the two supported application objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Problem {
    Consensus(ConsensusProblem),
    LeastSquares(LeastSquaresProblem),
}

/// Per-node optimum; identical across nodes for both applications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x_star: Vec<Vec<f64>>,
}

impl ConsensusProblem {
    /// Zero-mean unit-variance Gaussian private data, one vector per node.
    pub fn sample_gaussian(n: usize, u: usize, seed: u64) -> Self {
        let mut rng = seeds::rng_for(seed, 0);
        let s = (0..n)
            .map(|_| (0..u).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Self { u, s }
    }
}

impl LeastSquaresProblem {
    /// Gaussian observation blocks: `p_i` rows per node, unit-variance entries.
    pub fn sample_gaussian(n: usize, u: usize, rows_per_node: usize, seed: u64) -> Self {
        let mut rng = seeds::rng_for(seed, 0);
        let mut q = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            q.push(
                (0..rows_per_node)
                    .map(|_| (0..u).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect(),
            );
            y.push((0..rows_per_node).map(|_| StandardNormal.sample(&mut rng)).collect());
        }
        Self { u, q, y }
    }
}

impl Problem {
    pub fn u(&self) -> usize {
        match self {
            Problem::Consensus(p) => p.u,
            Problem::LeastSquares(p) => p.u,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Problem::Consensus(p) => p.s.len(),
            Problem::LeastSquares(p) => p.q.len(),
        }
    }

    /// Private datum of node `i` flattened to scalars (consensus: `s_i`;
    /// least squares: `Q_i` row-major followed by `y_i`).
    pub fn private_scalar(&self, i: usize) -> f64 {
        match self {
            Problem::Consensus(p) => p.s[i][0],
            Problem::LeastSquares(p) => p.q[i][0][0],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        serde_json::from_str(text).map_err(|e| ProblemError::Json(e.to_string()))
    }
}

/// Minimizer of `1/2 ||x - s_i||^2 + z_sum'x + (c d_i / 2) ||x||^2`:
/// `x = (s_i - z_sum) / (1 + c d_i)`.
pub fn local_x_update_consensus(s_i: &[f64], z_sum: &[f64], c: f64, d_i: usize) -> Vec<f64> {
    let denom = 1.0 + c * d_i as f64;
    s_i.iter().zip(z_sum).map(|(s, z)| (s - z) / denom).collect()
}

/// Minimizer of `1/2 ||y_i - Q_i x||^2 + z_sum'x + (c d_i / 2) ||x||^2`,
/// i.e. the solution of `(Q_i'Q_i + c d_i I) x = Q_i'y_i - z_sum` by a dense
/// symmetric positive definite solve.
pub fn local_x_update_ls(
    q_i: &[Vec<f64>],
    y_i: &[f64],
    z_sum: &[f64],
    c: f64,
    d_i: usize,
) -> Result<Vec<f64>, ProblemError> {
    let u = z_sum.len();
    let p = q_i.len();
    if y_i.len() != p || q_i.iter().any(|row| row.len() != u) {
        return Err(ProblemError::Dimension(format!(
            "Q_i is {}x{}, y_i has length {}, z_sum has length {}",
            p,
            q_i.first().map_or(0, Vec::len),
            y_i.len(),
            u
        )));
    }
    let q = DMatrix::from_row_iterator(p, u, q_i.iter().flatten().copied());
    let y = DVector::from_column_slice(y_i);
    if q.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite("least-squares block"));
    }
    let mut lhs = q.transpose() * &q;
    for k in 0..u {
        lhs[(k, k)] += c * d_i as f64;
    }
    let rhs = q.transpose() * y - DVector::from_column_slice(z_sum);
    let chol = lhs.cholesky().ok_or(ProblemError::RankDeficient)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Subgradient of the local objective at `x`: the quantity that carries the
/// private data. Consensus: `x - s_i`; least squares: `Q_i'(Q_i x - y_i)`.
pub fn subgradient(problem: &Problem, i: usize, x: &[f64]) -> Vec<f64> {
    match problem {
        Problem::Consensus(p) => x.iter().zip(&p.s[i]).map(|(xv, sv)| xv - sv).collect(),
        Problem::LeastSquares(p) => {
            let u = p.u;
            let q = &p.q[i];
            let residual: Vec<f64> = q
                .iter()
                .zip(&p.y[i])
                .map(|(row, yv)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - yv)
                .collect();
            (0..u).map(|k| q.iter().zip(&residual).map(|(row, r)| row[k] * r).sum()).collect()
        }
    }
}

/// Per-node local update used by the optimizer loop.
pub fn local_x_update(
    problem: &Problem,
    i: usize,
    z_sum: &[f64],
    c: f64,
    d_i: usize,
) -> Result<Vec<f64>, ProblemError> {
    match problem {
        Problem::Consensus(p) => Ok(local_x_update_consensus(&p.s[i], z_sum, c, d_i)),
        Problem::LeastSquares(p) => local_x_update_ls(&p.q[i], &p.y[i], z_sum, c, d_i),
    }
}

/// Centralized ground truth: consensus mean, or the stacked normal-equation
/// solution for least squares. Every node's optimum is the same vector.
pub fn global_optimum(problem: &Problem, graph: &Graph) -> Result<Solution, ProblemError> {
    let n = graph.n();
    if problem.node_count() != n {
        return Err(ProblemError::NodeCount { have: problem.node_count(), want: n });
    }
    let u = problem.u();
    let shared = match problem {
        Problem::Consensus(p) => {
            let mut mean = vec![0.0; u];
            for s_i in &p.s {
                if s_i.len() != u {
                    return Err(ProblemError::Dimension("consensus s_i dimension".into()));
                }
                for (m, v) in mean.iter_mut().zip(s_i) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            mean
        }
        Problem::LeastSquares(p) => {
            let total_rows: usize = p.q.iter().map(Vec::len).sum();
            if total_rows < u {
                return Err(ProblemError::RankDeficient);
            }
            let stacked_q = DMatrix::from_row_iterator(
                total_rows,
                u,
                p.q.iter().flatten().flatten().copied(),
            );
            let stacked_y =
                DVector::from_iterator(total_rows, p.y.iter().flatten().copied());
            let gram = stacked_q.transpose() * &stacked_q;
            let rhs = stacked_q.transpose() * stacked_y;
            let chol = gram.cholesky().ok_or(ProblemError::RankDeficient)?;
            chol.solve(&rhs).iter().copied().collect()
        }
    };
    Ok(Solution { x_star: vec![shared; n] })
}
