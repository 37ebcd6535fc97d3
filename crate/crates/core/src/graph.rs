//! Connected random geometric graphs and their incidence structure.
//!
//! Nodes are points in the unit square; two nodes are adjacent when their
//! Euclidean distance is at most `sqrt(2 ln(n) / n)`, the radius at which a
//! random geometric graph is connected with high probability. Node indices are
//! 0-based in memory; the JSON interchange format is 1-based.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

/// 0-based node index.
pub type NodeId = usize;

/// Default number of position redraws before giving up on connectivity.
pub const DEFAULT_RETRY_LIMIT: usize = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph generation for n={n}, seed={seed} stayed disconnected after {attempts} redraws")]
    Disconnected { n: usize, seed: u64, attempts: usize },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(NodeId, NodeId),
    #[error("edge ({0}, {1}) is invalid: {2}")]
    InvalidEdge(NodeId, NodeId, &'static str),
    #[error("malformed graph JSON: {0}")]
    Json(String),
}

/// Sign of a node's entry in the graph incidence matrix: +1 at the
/// lower-indexed endpoint of an edge, -1 at the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncidenceSign {
    Positive,
    Negative,
}

impl IncidenceSign {
    pub fn value(self) -> f64 {
        match self {
            IncidenceSign::Positive => 1.0,
            IncidenceSign::Negative => -1.0,
        }
    }
}

/// An undirected connected graph with retained layout.
///
/// Immutable after construction; shareable read-only across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    neighbors: Vec<Vec<NodeId>>,
    positions: Vec<[f64; 2]>,
    radius: Option<f64>,
}

/// 1-based JSON interchange form of [`Graph`].
#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    radius: Option<f64>,
    positions: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Edges may be given in either
    /// orientation; they are normalized to `i < j` and sorted.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        Self::from_parts(n, edges, vec![[0.0, 0.0]; n], None)
    }

    fn from_parts(
        n: usize,
        edges: &[(NodeId, NodeId)],
        positions: Vec<[f64; 2]>,
        radius: Option<f64>,
    ) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut norm: Vec<(NodeId, NodeId)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::InvalidEdge(a, b, "self-loop"));
            }
            if a >= n || b >= n {
                return Err(GraphError::InvalidEdge(a, b, "endpoint out of range"));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            let dup = norm.windows(2).find(|w| w[0] == w[1]).unwrap()[0];
            return Err(GraphError::InvalidEdge(dup.0, dup.1, "duplicate edge"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &norm {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
        }
        Ok(Self { n, edges: norm, neighbors, positions, radius })
    }

    /// Connection radius of the geometric model: `sqrt(2 ln(n) / n)`.
    pub fn geometric_radius(n: usize) -> f64 {
        (2.0 * (n as f64).ln() / n as f64).sqrt()
    }

    /// Draws a connected random geometric graph on `n` uniform points in the
    /// unit square. A disconnected draw discards the positions and redraws
    /// from the next substream; deterministic given `(n, seed)`.
    pub fn generate_geometric(n: usize, seed: u64) -> Result<Self, GraphError> {
        Self::generate_geometric_with_limit(n, seed, DEFAULT_RETRY_LIMIT)
    }

    /// As [`Graph::generate_geometric`] with an explicit redraw limit.
    pub fn generate_geometric_with_limit(
        n: usize,
        seed: u64,
        retry_limit: usize,
    ) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let radius = Self::geometric_radius(n);
        for attempt in 0..retry_limit {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_seed(seed, attempt as u64));
            let positions: Vec<[f64; 2]> =
                (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let dx = positions[i][0] - positions[j][0];
                    let dy = positions[i][1] - positions[j][1];
                    // pairs at exactly the radius count as connected
                    if (dx * dx + dy * dy).sqrt() <= radius {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::from_parts(n, &edges, positions, Some(radius))?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::Disconnected { n, seed, attempts: retry_limit })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges, `m`.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` pairs with `i < j`, sorted, indexed `e_1..e_m`.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.neighbors[i].len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn contains_edge(&self, i: NodeId, j: NodeId) -> bool {
        i != j && i < self.n && j < self.n && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// All ordered neighbor pairs `(i, j)`; each undirected edge appears twice.
    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n).flat_map(move |i| self.neighbors[i].iter().map(move |&j| (i, j)))
    }

    /// Incidence entry of node `i` on edge `(i, j)`: +1 when `i < j`.
    pub fn incidence_sign(&self, i: NodeId, j: NodeId) -> Result<IncidenceSign, GraphError> {
        if !self.contains_edge(i, j) {
            return Err(GraphError::NotAdjacent(i, j));
        }
        Ok(if i < j { IncidenceSign::Positive } else { IncidenceSign::Negative })
    }

    /// True iff a BFS from node 0 reaches all `n` nodes.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// JSON document `{n, radius, positions, edges}` with 1-based edges.
    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            n: self.n,
            radius: self.radius,
            positions: self.positions.clone(),
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphJson =
            serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        if doc.positions.len() != doc.n {
            return Err(GraphError::Json(format!(
                "expected {} positions, got {}",
                doc.n,
                doc.positions.len()
            )));
        }
        let edges: Vec<(NodeId, NodeId)> = doc
            .edges
            .iter()
            .map(|&[a, b]| {
                if a == 0 || b == 0 {
                    Err(GraphError::Json("edge indices are 1-based".into()))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<Result<_, _>>()?;
        Self::from_parts(doc.n, &edges, doc.positions, doc.radius)
    }
}
