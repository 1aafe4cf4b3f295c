//! Gossip topologies and mixing matrices.
//!
//! A topology is an undirected connected graph over `n` nodes; a mixing
//! matrix W assigns weights to its edges (plus self-loops) so that one
//! matrix application is one synchronous gossip-averaging round. Everything
//! downstream leans on three facts established here:
//!
//! - W is symmetric, doubly stochastic, and nonnegative, with W[i][j] = 0
//!   whenever (i, j) is not an edge and i != j.
//! - The spectral gap p = 1 - lambda^2, with lambda the largest-magnitude
//!   eigenvalue of W - (1/n) 11^T, is positive exactly when the graph is
//!   connected and aperiodic under W.
//! - One gossip round contracts consensus error: for any X,
//!   ||X W - X_bar||_F^2 <= (1 - p) ||X - X_bar||_F^2.
//!
//! Matrices are stored dense; sizes of interest are tens to low hundreds
//! of nodes, where the O(n^2) memory is irrelevant and the eigensolve is
//! exact and cheap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Relative tolerance under which |lambda| is treated as 1 (no gap).
const SPECTRAL_GAP_TOL: f64 = 1e-10;

/// Tolerance for double-stochasticity checks.
const STOCHASTICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// Cycle over n >= 3 nodes, degree 2.
    Ring,
    /// n = 2^k nodes, edges between ids differing in one bit, degree k.
    Hypercube,
    /// Node i links to (i +/- 2^m) mod n for every m with 2^m < n.
    Exponential,
    /// Every pair connected.
    Complete,
    /// Chain with endpoints of degree 1.
    Path,
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Hypercube => "hypercube",
            TopologyKind::Exponential => "exponential",
            TopologyKind::Complete => "complete",
            TopologyKind::Path => "path",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(TopologyKind::Ring),
            "hypercube" => Ok(TopologyKind::Hypercube),
            "exponential" => Ok(TopologyKind::Exponential),
            "complete" => Ok(TopologyKind::Complete),
            "path" => Ok(TopologyKind::Path),
            other => Err(SimError::Config(format!(
                "unknown topology kind '{other}' (expected ring | hypercube | exponential | complete | path)"
            ))),
        }
    }
}

/// Undirected simple graph. Edges are stored normalized: (i, j) with i < j,
/// sorted, deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    degree: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops are rejected, duplicates
    /// and orientation are normalized away. Connectivity is NOT enforced
    /// here; mixing-matrix construction checks it, because a disconnected
    /// graph has no positive spectral gap.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(SimError::Config("node count must be at least 1".into()));
        }
        let mut norm: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(SimError::Config(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(SimError::Config(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut degree = vec![0usize; n];
        for &(a, b) in &norm {
            degree[a] += 1;
            degree[b] += 1;
        }
        Ok(Graph {
            n,
            edges: norm,
            degree,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn is_regular(&self) -> bool {
        self.degree.iter().all(|&d| d == self.degree[0])
    }

    /// Number of connected components (1 = connected).
    pub fn component_count(&self) -> usize {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut components = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

/// Generates one of the stock topologies.
pub fn build_topology(kind: TopologyKind, n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(SimError::Config("node count must be at least 1".into()));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Ring => {
            if n < 3 {
                return Err(SimError::Config(format!(
                    "ring requires at least 3 nodes, got {n}"
                )));
            }
            (0..n).map(|i| (i, (i + 1) % n)).collect()
        }
        TopologyKind::Hypercube => {
            if !n.is_power_of_two() {
                return Err(SimError::Config(format!(
                    "hypercube requires a power-of-two node count, got {n}"
                )));
            }
            let bits = n.trailing_zeros();
            let mut e = Vec::new();
            for i in 0..n {
                for b in 0..bits {
                    if i & (1 << b) == 0 {
                        e.push((i, i | (1 << b)));
                    }
                }
            }
            e
        }
        TopologyKind::Exponential => {
            let mut e = Vec::new();
            let mut hop = 1usize;
            while hop < n {
                for i in 0..n {
                    e.push((i, (i + hop) % n));
                }
                hop *= 2;
            }
            e
        }
        TopologyKind::Complete => {
            let mut e = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    e.push((i, j));
                }
            }
            e
        }
        TopologyKind::Path => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
    };
    Graph::new(n, edges)
}

// ---------------------------------------------------------------------------
// Mixing matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// w_ij = 1 / (1 + max(deg_i, deg_j)) on edges; diagonal absorbs the
    /// remainder. Valid on any connected graph.
    Metropolis,
    /// w_ij = 1 / (1 + deg) uniformly, including the diagonal. Only doubly
    /// stochastic on regular graphs; irregular input falls back to
    /// Metropolis and sets the fallback flag on the result.
    #[serde(rename = "uniform")]
    UniformNeighbor,
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightScheme::Metropolis => write!(f, "metropolis"),
            WeightScheme::UniformNeighbor => write!(f, "uniform"),
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(WeightScheme::Metropolis),
            "uniform" => Ok(WeightScheme::UniformNeighbor),
            other => Err(SimError::Config(format!(
                "unknown weight scheme '{other}' (expected metropolis | uniform)"
            ))),
        }
    }
}

/// Symmetric doubly stochastic gossip matrix, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    w: Vec<f64>,
    scheme: WeightScheme,
    fallback: bool,
}

impl MixingMatrix {
    /// Wraps raw entries without validation. Intended for tests and
    /// diagnostic tooling; run [`MixingMatrix::validate`] if the input is
    /// not known-good.
    pub fn from_raw(n: usize, w: Vec<f64>, scheme: WeightScheme) -> Result<Self> {
        if w.len() != n * n {
            return Err(SimError::LengthMismatch(format!(
                "mixing matrix storage: expected {} entries, got {}",
                n * n,
                w.len()
            )));
        }
        Ok(MixingMatrix {
            n,
            w,
            scheme,
            fallback: false,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.w
    }

    /// Scheme actually applied (Metropolis when uniform fell back).
    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// True when uniform weights were requested on an irregular graph.
    pub fn fell_back(&self) -> bool {
        self.fallback
    }

    /// One synchronous gossip round: y_i = sum_j w_ij x_j. Zero weights are
    /// skipped, so cost is O(edges * dim); summation is in ascending j for
    /// reproducibility.
    pub fn mix(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        assert_eq!(xs.len(), self.n, "vector count must match node count");
        let dim = xs.first().map_or(0, Vec::len);
        let mut out = vec![vec![0.0; dim]; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let yi = &mut out[i];
            for (j, &wij) in row.iter().enumerate() {
                if wij != 0.0 {
                    let xj = &xs[j];
                    for k in 0..dim {
                        yi[k] += wij * xj[k];
                    }
                }
            }
        }
        out
    }

    /// Checks symmetry, nonnegativity, unit row/column sums (within 1e-12),
    /// and sparsity against the graph.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if graph.node_count() != self.n {
            return Err(SimError::LengthMismatch(format!(
                "matrix is {}x{} but graph has {} nodes",
                self.n,
                self.n,
                graph.node_count()
            )));
        }
        let mut is_edge = vec![false; self.n * self.n];
        for &(a, b) in graph.edges() {
            is_edge[a * self.n + b] = true;
            is_edge[b * self.n + a] = true;
        }
        for i in 0..self.n {
            let mut row_sum = 0.0;
            for j in 0..self.n {
                let wij = self.get(i, j);
                if wij < 0.0 {
                    return Err(SimError::Config(format!(
                        "mixing weight w[{i}][{j}] = {wij} is negative"
                    )));
                }
                if wij != self.get(j, i) {
                    return Err(SimError::Config(format!(
                        "mixing matrix not symmetric at ({i}, {j})"
                    )));
                }
                if i != j && wij != 0.0 && !is_edge[i * self.n + j] {
                    return Err(SimError::Config(format!(
                        "nonzero weight w[{i}][{j}] on a non-edge"
                    )));
                }
                row_sum += wij;
            }
            if (row_sum - 1.0).abs() > STOCHASTICITY_TOL {
                return Err(SimError::Config(format!(
                    "row {i} sums to {row_sum}, not 1"
                )));
            }
        }
        Ok(())
    }
}

/// Assigns weights to a connected graph.
pub fn build_mixing_matrix(graph: &Graph, scheme: WeightScheme) -> Result<MixingMatrix> {
    let components = graph.component_count();
    if components > 1 {
        return Err(SimError::Disconnected { components });
    }
    let n = graph.node_count();
    let mut w = vec![0.0; n * n];

    let (applied, fallback) = match scheme {
        WeightScheme::UniformNeighbor if !graph.is_regular() => (WeightScheme::Metropolis, true),
        s => (s, false),
    };

    match applied {
        WeightScheme::UniformNeighbor => {
            // Regular graph: every node weighs itself and each neighbor
            // equally, which is symmetric and doubly stochastic by itself.
            let share = 1.0 / (1.0 + graph.degree(0) as f64);
            for i in 0..n {
                w[i * n + i] = share;
            }
            for &(a, b) in graph.edges() {
                w[a * n + b] = share;
                w[b * n + a] = share;
            }
        }
        WeightScheme::Metropolis => {
            for &(a, b) in graph.edges() {
                let wab = 1.0 / (1.0 + graph.degree(a).max(graph.degree(b)) as f64);
                w[a * n + b] = wab;
                w[b * n + a] = wab;
            }
            for i in 0..n {
                let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum();
                w[i * n + i] = 1.0 - off;
            }
        }
    }

    let m = MixingMatrix {
        n,
        w,
        scheme: applied,
        fallback,
    };
    m.validate(graph)?;
    Ok(m)
}

/// Spectral gap p = 1 - lambda^2, where lambda is the largest-magnitude
/// eigenvalue of W - (1/n) 11^T. Errors when |lambda| reaches 1 within
/// tolerance: the matrix then has no averaging power (disconnected or
/// periodic), and no step size rescues it.
pub fn spectral_gap(w: &MixingMatrix) -> Result<f64> {
    let n = w.node_count();
    let shift = 1.0 / n as f64;
    let deflated = DMatrix::from_fn(n, n, |i, j| w.get(i, j) - shift);
    let eigen = deflated.symmetric_eigen();
    let lambda = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e.abs()));
    if lambda >= 1.0 - SPECTRAL_GAP_TOL {
        return Err(SimError::NoSpectralGap { lambda });
    }
    Ok(1.0 - lambda * lambda)
}
