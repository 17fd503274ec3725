//! Weighted undirected graphs and their combinatorial Laplacians.
//!
//! Graphs are small and dense at the scales this crate targets, so the
//! Laplacian is materialised as a dense symmetric matrix.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Simple undirected graph with positive edge weights.
///
/// Edges are stored with `u < v`, sorted by `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (u, v, weight) in edges {
            for vertex in [u, v] {
                if vertex >= n {
                    return Err(Error::VertexOutOfRange { vertex, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::NonPositiveWeight { u, v, weight });
            }
            let (a, b) = (u.min(v), u.max(v));
            if !seen.insert((a, b)) {
                return Err(Error::DuplicateEdge { u: a, v: b });
            }
            out.push(Edge { u: a, v: b, weight });
        }
        out.sort_by_key(|e| (e.u, e.v));
        Ok(Self { n, edges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Same topology with new weights, one per edge in canonical order.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        Self::new(
            self.n,
            self.edges.iter().zip(weights).map(|(e, &w)| (e.u, e.v, w)),
        )
    }

    /// Number of connected components (isolated vertices count as one each).
    pub fn num_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.n;
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }

    /// Parse the whitespace edge-list format: one `u v weight` triple per
    /// line, 0-indexed, `#` starts a comment. When `n` is `None` the vertex
    /// count is one past the largest id seen.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut triples = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `u v weight`, got {:?}",
                    lineno + 1,
                    raw
                )));
            }
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", lineno + 1));
            let u: usize = fields[0].parse().map_err(|_| bad("vertex"))?;
            let v: usize = fields[1].parse().map_err(|_| bad("vertex"))?;
            let w: f64 = fields[2].parse().map_err(|_| bad("weight"))?;
            triples.push((u, v, w));
        }
        let n = n.unwrap_or_else(|| {
            triples
                .iter()
                .map(|&(u, v, _)| u.max(v) + 1)
                .max()
                .unwrap_or(0)
        });
        Self::new(n, triples)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# {} vertices, {} edges\n", self.n, self.edges.len());
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.weight);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Complete(usize),
    Path(usize),
    Grid { rows: usize, cols: usize },
}

/// Unit-weight standard graphs. Grid vertex `(r, c)` has id `r * cols + c`
/// and is joined to its four lattice neighbours.
pub fn standard_topology(kind: Topology) -> Result<WeightedGraph> {
    match kind {
        Topology::Complete(n) => {
            if n == 0 {
                return Err(Error::SizeZero);
            }
            let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v, 1.0)));
            WeightedGraph::new(n, edges)
        }
        Topology::Path(n) => {
            if n == 0 {
                return Err(Error::SizeZero);
            }
            WeightedGraph::new(n, (1..n).map(|v| (v - 1, v, 1.0)))
        }
        Topology::Grid { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::SizeZero);
            }
            let mut edges = Vec::with_capacity(2 * rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    let id = r * cols + c;
                    if c + 1 < cols {
                        edges.push((id, id + 1, 1.0));
                    }
                    if r + 1 < rows {
                        edges.push((id, id + cols, 1.0));
                    }
                }
            }
            WeightedGraph::new(rows * cols, edges)
        }
    }
}

/// Dense combinatorial Laplacian `L = D - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Wrap an arbitrary square matrix. Symmetry is checked later by the
    /// eigensolver, not here.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Laplacian must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }
}

pub fn laplacian(g: &WeightedGraph) -> Laplacian {
    let mut l = DMatrix::zeros(g.n(), g.n());
    for e in g.edges() {
        l[(e.u, e.v)] -= e.weight;
        l[(e.v, e.u)] -= e.weight;
        l[(e.u, e.u)] += e.weight;
        l[(e.v, e.v)] += e.weight;
    }
    Laplacian(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Uniform { lo: f64, hi: f64 },
}

impl Default for WeightDistribution {
    fn default() -> Self {
        WeightDistribution::Uniform { lo: 0.5, hi: 1.5 }
    }
}

/// Draw i.i.d. edge weights for the given topology.
pub fn random_weighted_model(
    topology: &WeightedGraph,
    dist: WeightDistribution,
    seed: u64,
) -> Result<WeightedGraph> {
    let WeightDistribution::Uniform { lo, hi } = dist;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::BadRange { lo, hi });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..topology.num_edges())
        .map(|_| rng.random_range(lo..hi))
        .collect();
    topology.with_weights(&weights)
}
