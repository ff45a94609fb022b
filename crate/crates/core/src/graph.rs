//! Weighted combinatorial graphs with an optional Dirichlet set.
//!
//! All operators act on functions that vanish on the Dirichlet set. On a
//! finite truncation of an infinite graph this realizes the space of
//! finitely supported functions: the outer boundary of the truncation is
//! clamped to zero, and so is any extra clamp vertex (the origin of the
//! two-dimensional lattice).

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected edge with a strictly positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Finite weighted graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    adjacency: Vec<(usize, f64)>,
    dirichlet: Vec<bool>,
}

impl WeightedGraph {
    /// Builds and validates a graph.
    ///
    /// The graph must be connected, loop-free, without multiple edges and
    /// with positive weights. Interior (non-Dirichlet) vertices may not have
    /// degree one.
    pub fn new(n: usize, edges: Vec<Edge>, dirichlet: impl IntoIterator<Item = usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut degree = vec![0usize; n];
        for e in &edges {
            if e.a >= n || e.b >= n {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) references a missing vertex", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(Error::InvalidGraph(format!("loop at vertex {}", e.a)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) has weight {}", e.a, e.b, e.weight)));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!("multiple edges between {} and {}", key.0, key.1)));
            }
            degree[e.a] += 1;
            degree[e.b] += 1;
        }

        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![(0usize, 0.0f64); offsets[n]];
        for e in &edges {
            adjacency[fill[e.a]] = (e.b, e.weight);
            fill[e.a] += 1;
            adjacency[fill[e.b]] = (e.a, e.weight);
            fill[e.b] += 1;
        }
        for v in 0..n {
            adjacency[offsets[v]..offsets[v + 1]].sort_by_key(|&(w, _)| w);
        }

        let mut mask = vec![false; n];
        for v in dirichlet {
            if v >= n {
                return Err(Error::InvalidGraph(format!("Dirichlet vertex {v} does not exist")));
            }
            mask[v] = true;
        }

        let graph = Self { n, edges, offsets, adjacency, dirichlet: mask };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        if let Some(v) = (0..n).find(|&v| !graph.dirichlet[v] && graph.degree(v) == 1) {
            return Err(Error::InvalidGraph(format!("interior vertex {v} has degree one")));
        }
        Ok(graph)
    }

    fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in self.neighbors(v) {
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` with the weight of the connecting edge, sorted by id.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.dirichlet[v]
    }

    pub fn dirichlet_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.dirichlet[v])
    }

    pub fn interior_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| !self.dirichlet[v])
    }

    pub fn has_dirichlet(&self) -> bool {
        self.dirichlet.iter().any(|&d| d)
    }

    /// Same graph with a different Dirichlet set.
    pub fn with_dirichlet(&self, dirichlet: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(self.n, self.edges.clone(), dirichlet)
    }

    /// Incident weight sum. A vertex is `R`-mild iff this is at most `R`.
    pub fn mildness(&self, v: usize) -> f64 {
        self.neighbors(v).iter().map(|&(_, g)| g).sum()
    }

    /// Largest incident weight sum, a Gershgorin bound for half the spectrum of `-Δ`.
    pub fn max_mildness(&self) -> f64 {
        (0..self.n).map(|v| self.mildness(v)).fold(0.0, f64::max)
    }

    /// The energy form `a[f] = Σ_e g_e |f(v) - f(v')|²`.
    pub fn energy(&self, f: &VertexFunction) -> f64 {
        self.energy_pairing(f, f)
    }

    /// The bilinear energy form `a[f, h]`.
    pub fn energy_pairing(&self, f: &VertexFunction, h: &VertexFunction) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(h.len(), self.n);
        self.edges.iter().map(|e| e.weight * (f[e.a] - f[e.b]) * (h[e.a] - h[e.b])).sum()
    }

    /// `(Δf)(v) = Σ_{v'~v} g (f(v') - f(v))`, clamped to zero on the Dirichlet set.
    pub fn laplacian_apply(&self, f: &VertexFunction) -> VertexFunction {
        let mut out = vec![0.0; self.n];
        self.laplacian_into(f.values(), &mut out);
        VertexFunction::from_vec(out)
    }

    pub(crate) fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        for v in 0..self.n {
            if self.dirichlet[v] {
                out[v] = 0.0;
                continue;
            }
            let fv = f[v];
            out[v] = self.neighbors(v).iter().map(|&(w, g)| g * (f[w] - fv)).sum();
        }
    }

    /// `‖f‖²_{ℓ^p} / a[f]` with `p = D/(D-2)`.
    pub fn sobolev_ratio(&self, f: &VertexFunction, dimension: f64) -> Result<f64> {
        if dimension <= 2.0 {
            return Err(Error::InvalidArgument(format!("Sobolev exponent needs D > 2, got {dimension}")));
        }
        let energy = self.energy(f);
        if energy == 0.0 {
            return Err(Error::InvalidArgument("function has zero energy".into()));
        }
        let p = dimension / (dimension - 2.0);
        let norm_p = f.values().iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        Ok(norm_p * norm_p / energy)
    }

    /// Serializable description of the graph.
    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            version: GRAPH_DOCUMENT_VERSION,
            vertices: self.n,
            edges: self.edges.clone(),
            dirichlet: self.dirichlet_vertices().collect(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self> {
        if doc.version != GRAPH_DOCUMENT_VERSION {
            return Err(Error::InvalidGraph(format!("unsupported document version {}", doc.version)));
        }
        Self::new(doc.vertices, doc.edges.clone(), doc.dirichlet.iter().copied())
    }
}

pub const GRAPH_DOCUMENT_VERSION: u32 = 1;

/// Versioned JSON form of a general graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphDocument {
    pub version: u32,
    pub vertices: usize,
    pub edges: Vec<Edge>,
    pub dirichlet: Vec<usize>,
}

/// A real function on the vertices of a finite graph.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFunction {
    values: Vec<f64>,
}

impl VertexFunction {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn delta(n: usize, v: usize) -> Self {
        let mut f = Self::zeros(n);
        f.values[v] = 1.0;
        f
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, _)| i)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Checks that the function lives on `graph` and vanishes on its Dirichlet set.
    pub fn check_admissible(&self, graph: &WeightedGraph) -> Result<()> {
        if self.len() != graph.vertex_count() {
            return Err(Error::DimensionMismatch { expected: graph.vertex_count(), got: self.len() });
        }
        if let Some(v) = graph.dirichlet_vertices().find(|&v| self.values[v] != 0.0) {
            return Err(Error::InvalidArgument(format!("function does not vanish on Dirichlet vertex {v}")));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for VertexFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for VertexFunction {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0 - 1 - 2 with both ends clamped.
    pub(crate) fn path3() -> WeightedGraph {
        WeightedGraph::new(3, vec![Edge { a: 0, b: 1, weight: 1.0 }, Edge { a: 1, b: 2, weight: 1.0 }], [0, 2]).unwrap()
    }

    #[test]
    fn rejects_malformed_graphs() {
        let e = |a, b| Edge { a, b, weight: 1.0 };
        assert!(WeightedGraph::new(2, vec![e(0, 0)], []).is_err());
        assert!(WeightedGraph::new(2, vec![e(0, 1), e(1, 0)], []).is_err());
        assert!(WeightedGraph::new(3, vec![e(0, 1)], []).is_err());
        assert!(WeightedGraph::new(2, vec![Edge { a: 0, b: 1, weight: 0.0 }], []).is_err());
        assert!(WeightedGraph::new(2, vec![e(0, 5)], []).is_err());
        // interior vertex of degree one
        assert!(WeightedGraph::new(3, vec![e(0, 1), e(1, 2)], [0]).is_err());
    }

    #[test]
    fn star_with_half_weights() {
        let edges = (1..=4).map(|b| Edge { a: 0, b, weight: 0.5 }).collect::<Vec<_>>();
        // leaves clamped, so the star's center is the only interior vertex
        let g = WeightedGraph::new(5, edges, 1..=4).unwrap();
        let f = VertexFunction::delta(5, 0);
        assert_eq!(g.energy(&f), 2.0);
        assert_eq!(g.mildness(0), 2.0);
    }

    #[test]
    fn path_laplacian() {
        let g = path3();
        let f = VertexFunction::delta(3, 1);
        let lf = g.laplacian_apply(&f);
        assert_eq!(lf.values(), &[0.0, -2.0, 0.0]);
        assert_eq!(g.energy(&f), 2.0);
    }

    #[test]
    fn document_round_trip() {
        let g = path3();
        let doc = g.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: GraphDocument = serde_json::from_str(&json).unwrap();
        let g2 = WeightedGraph::from_document(&back).unwrap();
        assert_eq!(g2.edges(), g.edges());
        assert_eq!(g2.dirichlet_vertices().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn sobolev_needs_dimension_above_two() {
        let g = path3();
        let f = VertexFunction::delta(3, 1);
        assert!(g.sobolev_ratio(&f, 2.0).is_err());
        assert!(g.sobolev_ratio(&VertexFunction::zeros(3), 3.0).is_err());
    }
}
