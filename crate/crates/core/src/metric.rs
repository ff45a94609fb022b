//! Metric graphs: edges are intervals of length `l_e` carrying the form `∫|φ'|²`.
//!
//! The combinatorial reduction assigns `g_e = 1/l_e`; edgewise-linear
//! functions have exactly the combinatorial energy. Potentials live on short
//! segments next to chosen vertices. The form `∫ V|φ|²` is discretized with
//! linear elements; where `V = 0` a single cell per segment is exact for the
//! pencil because the energy minimizer is linear there.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::bs::{bs_matrix, bs_spectrum, SparsePotential};
use crate::error::{Error, Result};
use crate::graph::{Edge, WeightedGraph};
use crate::green::{GreenTable, SolveGreen};
use crate::lattice::{Lattice, Point};
use crate::linalg::{symmetric_eigen_desc, InertiaCounter};
use crate::sparse::CandidateStream;

/// Upper bound on edge lengths.
pub const MAX_EDGE_LENGTH: f64 = 1e6;

/// Fewest cells allowed on a segment carrying potential.
pub const MIN_SUPPORT_CELLS: usize = 8;

/// Residual bound for metric pencil eigenpairs, relative to `‖B‖ ‖x‖`.
pub const PENCIL_RESIDUAL_TOLERANCE: f64 = 1e-8;

/// An edge `a → b` identified with `(0, length)`, arclength measured from `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct MetricGraph {
    edges: Vec<MetricEdge>,
    combinatorial: WeightedGraph,
}

impl MetricGraph {
    pub fn new(vertices: usize, edges: Vec<MetricEdge>, dirichlet: impl IntoIterator<Item = usize>) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| !(e.length > 0.0 && e.length <= MAX_EDGE_LENGTH)) {
            return Err(Error::InvalidGraph(format!(
                "edge ({}, {}) has length {}, outside (0, {MAX_EDGE_LENGTH}]",
                e.a, e.b, e.length
            )));
        }
        let weighted = edges.iter().map(|e| Edge { a: e.a, b: e.b, weight: 1.0 / e.length }).collect();
        let combinatorial = WeightedGraph::new(vertices, weighted, dirichlet)?;
        Ok(Self { edges, combinatorial })
    }

    /// Metric version of a lattice box; `length` receives the two endpoint coordinates.
    pub fn from_lattice(lattice: &Lattice, mut length: impl FnMut(Point, Point) -> f64) -> Result<Self> {
        let g = lattice.graph();
        let edges = g
            .edges()
            .iter()
            .map(|e| MetricEdge { a: e.a, b: e.b, length: length(lattice.coords(e.a), lattice.coords(e.b)) })
            .collect();
        Self::new(g.vertex_count(), edges, g.dirichlet_vertices())
    }

    pub fn edges(&self) -> &[MetricEdge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.combinatorial.vertex_count()
    }

    /// The reduction with weights `g_e = 1/l_e`.
    pub fn combinatorial(&self) -> &WeightedGraph {
        &self.combinatorial
    }

    pub fn to_combinatorial(&self) -> WeightedGraph {
        self.combinatorial.clone()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.combinatorial.degree(v)
    }

    /// Edges at `v` as `(edge index, v is the start)`.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.edges.iter().enumerate().filter_map(move |(i, e)| {
            if e.a == v {
                Some((i, true))
            } else if e.b == v {
                Some((i, false))
            } else {
                None
            }
        })
    }

    fn min_incident_length(&self, v: usize) -> f64 {
        self.incident(v).map(|(i, _)| self.edges[i].length).fold(f64::INFINITY, f64::min)
    }
}

/// A constant piece of potential on `[start, end]` of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PotentialPiece {
    pub edge: usize,
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SupportVertex {
    pub vertex: usize,
    pub mass: f64,
    pub epsilon: f64,
    pub height: f64,
}

/// `V = p_n / (ε_n deg v_n)` within distance `ε_n` of `v_n`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPotential {
    pub supports: Vec<SupportVertex>,
    pub pieces: Vec<PotentialPiece>,
}

impl MetricPotential {
    pub fn total_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.value * (p.end - p.start)).sum()
    }

    fn pieces_on(&self, edge: usize) -> impl Iterator<Item = &PotentialPiece> {
        self.pieces.iter().filter(move |p| p.edge == edge)
    }

    pub fn min_epsilon(&self) -> f64 {
        self.supports.iter().map(|s| s.epsilon).fold(f64::INFINITY, f64::min)
    }
}

pub fn build_metric_potential(
    graph: &MetricGraph,
    vertices: &[usize],
    masses: &[f64],
    epsilons: &[f64],
) -> Result<MetricPotential> {
    if vertices.len() != masses.len() || vertices.len() != epsilons.len() {
        return Err(Error::DimensionMismatch { expected: vertices.len(), got: masses.len().min(epsilons.len()) });
    }
    let comb = graph.combinatorial();
    for (i, &v) in vertices.iter().enumerate() {
        if v >= comb.vertex_count() || comb.is_dirichlet(v) {
            return Err(Error::InvalidArgument(format!("support vertex {v} must be interior")));
        }
        if vertices[..i].contains(&v) {
            return Err(Error::InvalidArgument(format!("support vertex {v} repeated")));
        }
        if let Some(&(w, _)) = comb.neighbors(v).iter().find(|(w, _)| vertices.contains(w)) {
            return Err(Error::InvalidArgument(format!("support vertices {v} and {w} are neighbors")));
        }
    }
    let mut supports = Vec::with_capacity(vertices.len());
    let mut pieces = Vec::new();
    for ((&v, &p), &eps) in vertices.iter().zip(masses).zip(epsilons) {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass {p} at vertex {v} must be positive")));
        }
        let limit = graph.min_incident_length(v);
        if !(eps > 0.0 && eps < limit) {
            return Err(Error::InvalidArgument(format!("epsilon {eps} at vertex {v} must lie in (0, {limit})")));
        }
        let height = p / (eps * graph.degree(v) as f64);
        for (e, at_start) in graph.incident(v) {
            let l = graph.edges[e].length;
            let (start, end) = if at_start { (0.0, eps) } else { (l - eps, l) };
            pieces.push(PotentialPiece { edge: e, start, end, value: height });
        }
        supports.push(SupportVertex { vertex: v, mass: p, epsilon: eps, height });
    }
    Ok(MetricPotential { supports, pieces })
}

/// `ε_0 · 4^{-n}` for `n = 1..=count`.
pub fn epsilon_schedule(eps0: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|n| eps0 * 0.25f64.powi(n as i32)).collect()
}

/// Where a discretization node sits on the metric graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeLocation {
    Vertex(usize),
    Edge { edge: usize, arclength: f64 },
}

/// A linear element between two nodes with constant potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub potential: f64,
    pub edge: usize,
}

/// Piecewise-uniform linear-element mesh. Node `v < vertex_count` is graph vertex `v`.
#[derive(Debug, Clone)]
pub struct DiscretizedGraph {
    locations: Vec<NodeLocation>,
    cells: Vec<Cell>,
    stiffness: WeightedGraph,
    vertex_count: usize,
    edge_lengths: Vec<f64>,
}

/// Uniform cells of size at most `h_target` on every edge, no potential.
pub fn discretize(graph: &MetricGraph, h_target: f64) -> Result<DiscretizedGraph> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid step {h_target} must be positive")));
    }
    let segments = graph.edges.iter().map(|e| vec![(e.length, 0.0, cells_for(e.length, h_target))]).collect();
    DiscretizedGraph::assemble(graph, segments)
}

/// Mesh resolving `potential`: each potential segment gets `support_cells` uniform
/// cells (at least [`MIN_SUPPORT_CELLS`]); other segments use cells of size at most
/// `free_step`, or one cell when `free_step` is `None`.
pub fn discretize_with_potential(
    graph: &MetricGraph,
    potential: &MetricPotential,
    support_cells: usize,
    free_step: Option<f64>,
) -> Result<DiscretizedGraph> {
    if support_cells < MIN_SUPPORT_CELLS {
        let eps = potential.min_epsilon();
        return Err(Error::Resolution { h: eps / support_cells as f64, limit: eps / MIN_SUPPORT_CELLS as f64 });
    }
    if let Some(h) = free_step {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step {h} must be positive")));
        }
    }
    let mut segments = Vec::with_capacity(graph.edges.len());
    for (i, e) in graph.edges.iter().enumerate() {
        let mut pieces: Vec<&PotentialPiece> = potential.pieces_on(i).collect();
        pieces.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut segs = Vec::new();
        let mut pos = 0.0;
        for p in pieces {
            if p.start > pos {
                let len = p.start - pos;
                segs.push((len, 0.0, free_step.map_or(1, |h| cells_for(len, h))));
            }
            segs.push((p.end - p.start, p.value, support_cells));
            pos = p.end;
        }
        if e.length > pos {
            let len = e.length - pos;
            segs.push((len, 0.0, free_step.map_or(1, |h| cells_for(len, h))));
        }
        segments.push(segs);
    }
    DiscretizedGraph::assemble(graph, segments)
}

fn cells_for(length: f64, h: f64) -> usize {
    ((length / h).ceil() as usize).max(1)
}

impl DiscretizedGraph {
    /// `segments[e]` lists `(length, potential, cells)` along edge `e` from its start.
    fn assemble(graph: &MetricGraph, segments: Vec<Vec<(f64, f64, usize)>>) -> Result<Self> {
        let n = graph.vertex_count();
        let mut locations: Vec<NodeLocation> = (0..n).map(NodeLocation::Vertex).collect();
        let mut cells = Vec::new();
        for (ei, (e, segs)) in graph.edges.iter().zip(segments).enumerate() {
            let last_seg = segs.len() - 1;
            let mut prev = e.a;
            let mut offset = 0.0;
            for (si, (len, value, count)) in segs.into_iter().enumerate() {
                let h = len / count as f64;
                for c in 0..count {
                    let end_here = si == last_seg && c + 1 == count;
                    let next = if end_here {
                        e.b
                    } else {
                        locations.push(NodeLocation::Edge { edge: ei, arclength: offset + h * (c + 1) as f64 });
                        locations.len() - 1
                    };
                    let length = if end_here { e.length - (offset + h * c as f64) } else { h };
                    cells.push(Cell { a: prev, b: next, length, potential: value, edge: ei });
                    prev = next;
                }
                offset += len;
            }
        }
        let edges = cells.iter().map(|c| Edge { a: c.a, b: c.b, weight: 1.0 / c.length }).collect();
        let stiffness = WeightedGraph::new(locations.len(), edges, graph.combinatorial().dirichlet_vertices())?;
        Ok(Self {
            locations,
            cells,
            stiffness,
            vertex_count: n,
            edge_lengths: graph.edges.iter().map(|e| e.length).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.locations.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn location(&self, node: usize) -> NodeLocation {
        self.locations[node]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Stiffness matrix as a weighted graph (`g = 1/h` per cell) with the base Dirichlet set.
    pub fn stiffness(&self) -> &WeightedGraph {
        &self.stiffness
    }

    /// `a_Γ[φ, ψ] = ∫ φ' ψ'` for piecewise-linear fields.
    pub fn energy_pairing(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.cells.iter().map(|c| (phi[c.b] - phi[c.a]) * (psi[c.b] - psi[c.a]) / c.length).sum()
    }

    pub fn energy(&self, phi: &[f64]) -> f64 {
        self.energy_pairing(phi, phi)
    }

    /// `∫ V |φ|²` with the cellwise-constant potential.
    pub fn potential_form(&self, phi: &[f64]) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.potential != 0.0)
            .map(|c| {
                let (x, y) = (phi[c.a], phi[c.b]);
                c.potential * c.length / 3.0 * (x * x + x * y + y * y)
            })
            .sum()
    }

    /// Nodes touched by potential-bearing cells, excluding Dirichlet nodes, sorted.
    pub fn support_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .cells
            .iter()
            .filter(|c| c.potential > 0.0)
            .flat_map(|c| [c.a, c.b])
            .filter(|&v| !self.stiffness.is_dirichlet(v))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Consistent mass matrix of `∫ V|φ|²` restricted to `nodes`.
    fn potential_matrix(&self, nodes: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(nodes.len(), nodes.len());
        let pos = |v: usize| nodes.binary_search(&v).ok();
        for c in self.cells.iter().filter(|c| c.potential > 0.0) {
            let w = c.potential * c.length / 6.0;
            let (ia, ib) = (pos(c.a), pos(c.b));
            if let Some(i) = ia {
                m[(i, i)] += 2.0 * w;
            }
            if let Some(j) = ib {
                m[(j, j)] += 2.0 * w;
            }
            if let (Some(i), Some(j)) = (ia, ib) {
                m[(i, j)] += w;
                m[(j, i)] += w;
            }
        }
        m
    }
}

/// Splits `φ` into the edgewise-linear interpolant of its vertex values and a
/// remainder vanishing at every vertex.
pub fn pl_decompose(mesh: &DiscretizedGraph, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut linear = vec![0.0; phi.len()];
    linear[..mesh.vertex_count].copy_from_slice(&phi[..mesh.vertex_count]);
    let mut ends = vec![(0usize, 0usize); mesh.edge_lengths.len()];
    for c in &mesh.cells {
        if c.a < mesh.vertex_count {
            ends[c.edge].0 = c.a;
        }
        if c.b < mesh.vertex_count {
            ends[c.edge].1 = c.b;
        }
    }
    for (node, loc) in mesh.locations.iter().enumerate() {
        if let NodeLocation::Edge { edge, arclength } = *loc {
            let l = mesh.edge_lengths[edge];
            let (a, b) = ends[edge];
            linear[node] = (phi[a] * (l - arclength) + phi[b] * arclength) / l;
        }
    }
    let rest = phi.iter().zip(&linear).map(|(p, q)| p - q).collect();
    (linear, rest)
}

/// Top eigenvalues of `∫V|φ|² = λ ∫|φ'|²` on the mesh, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricSpectrum {
    pub values: Vec<f64>,
    pub max_relative_residual: f64,
    pub support_nodes: usize,
}

/// Reduces the pencil to the potential-bearing nodes through the Schur
/// complement of the stiffness matrix, then solves it densely.
pub fn metric_bs_spectrum(mesh: &DiscretizedGraph, count: usize) -> Result<MetricSpectrum> {
    let nodes = mesh.support_nodes();
    if count > nodes.len() {
        return Err(Error::InvalidArgument(format!(
            "{count} eigenvalues requested but the potential form has rank {}",
            nodes.len()
        )));
    }
    if nodes.is_empty() {
        return Ok(MetricSpectrum { values: vec![], max_relative_residual: 0.0, support_nodes: 0 });
    }
    let counter = InertiaCounter::new(mesh.stiffness(), &nodes, &vec![0.0; nodes.len()])?;
    let schur = counter.schur_complement().clone();
    let mass = mesh.potential_matrix(&nodes);
    let chol =
        schur.clone().cholesky().ok_or_else(|| Error::Singular("reduced stiffness is not positive definite".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&mass).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c =
        l.solve_lower_triangular(&x.transpose()).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen_desc(&c);
    let lt = l.transpose();
    let scale = mass.norm();
    let mut worst = 0.0f64;
    for i in 0..count {
        let y = vectors.column(i).into_owned();
        let v = lt.solve_upper_triangular(&y).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
        let r = &mass * &v - (&schur * &v) * values[i];
        worst = worst.max(r.norm() / (scale * v.norm()));
    }
    if worst > PENCIL_RESIDUAL_TOLERANCE {
        return Err(Error::NotConverged { iterations: 1, residual: worst });
    }
    Ok(MetricSpectrum { values: values[..count].to_vec(), max_relative_residual: worst, support_nodes: nodes.len() })
}

/// Spectrum of the point-mass potential `Σ p_n δ_{v_n}` on the combinatorial reduction.
pub fn point_mass_reference(graph: &MetricGraph, vertices: &[usize], masses: &[f64]) -> Result<Vec<f64>> {
    let table = GreenTable::new(Arc::new(SolveGreen::new(graph.to_combinatorial())?));
    let potential = SparsePotential::new(&table, vertices, masses)?;
    Ok(bs_spectrum(&bs_matrix(&table, &potential)?.matrix)?.values)
}

/// One row of an ε sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub eps0: f64,
    pub index: usize,
    pub metric: f64,
    pub point_mass: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpsilonSweep {
    pub rows: Vec<SweepRow>,
    pub point_mass: Vec<f64>,
    /// `|λ_n(metric) - λ_n(point mass)|` shrinks along the sweep for every `n`.
    pub monotone: bool,
}

/// Runs the metric pencil for each `ε_0` (schedule `ε_0 4^{-n}`) against the point-mass limit.
pub fn epsilon_sweep(
    graph: &MetricGraph,
    vertices: &[usize],
    masses: &[f64],
    eps0_values: &[f64],
    support_cells: usize,
) -> Result<EpsilonSweep> {
    let reference = point_mass_reference(graph, vertices, masses)?;
    let count = vertices.len();
    let mut rows = Vec::new();
    for &eps0 in eps0_values {
        let potential = build_metric_potential(graph, vertices, masses, &epsilon_schedule(eps0, count))?;
        let mesh = discretize_with_potential(graph, &potential, support_cells, None)?;
        let spectrum = metric_bs_spectrum(&mesh, count)?;
        for (i, (&m, &p)) in spectrum.values.iter().zip(&reference).enumerate() {
            rows.push(SweepRow { eps0, index: i + 1, metric: m, point_mass: p, difference: (m - p).abs() });
        }
    }
    let monotone = (0..count).all(|i| {
        let diffs: Vec<f64> = rows.iter().filter(|r| r.index == i + 1).map(|r| r.difference).collect();
        diffs.windows(2).all(|w| w[1] <= w[0])
    });
    Ok(EpsilonSweep { rows, point_mass: reference, monotone })
}

/// Candidate wrapper that skips vertices adjacent to an accepted one.
#[derive(Debug)]
pub struct NonAdjacentStream<'a, C> {
    inner: C,
    graph: &'a WeightedGraph,
}

impl<'a, C: CandidateStream<Vertex = usize>> NonAdjacentStream<'a, C> {
    pub fn new(inner: C, graph: &'a WeightedGraph) -> Self {
        Self { inner, graph }
    }
}

impl<C: CandidateStream<Vertex = usize>> CandidateStream for NonAdjacentStream<'_, C> {
    type Vertex = usize;

    fn next_candidate(&mut self, accepted: &[usize], epsilons: &[f64]) -> Result<Option<usize>> {
        while let Some(v) = self.inner.next_candidate(accepted, epsilons)? {
            if !self.graph.neighbors(v).iter().any(|(w, _)| accepted.contains(w)) {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    fn scanned(&self) -> usize {
        self.inner.scanned()
    }
}

/// Piecewise-constant potential on `(0, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPotential {
    /// `0 = b_0 < b_1 < … < b_k = a`.
    pub breakpoints: Vec<f64>,
    /// Value on `(b_i, b_{i+1})`.
    pub values: Vec<f64>,
}

impl StepPotential {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::DimensionMismatch { expected: values.len() + 1, got: breakpoints.len() });
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("breakpoints must increase from 0".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("potential values must be finite and nonnegative".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(length: f64, value: f64) -> Result<Self> {
        Self::new(vec![0.0, length], vec![value])
    }

    pub fn length(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty")
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0]) || self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// `∫ √V`.
    pub fn sqrt_integral(&self) -> f64 {
        self.breakpoints.windows(2).zip(&self.values).map(|(b, v)| v.sqrt() * (b[1] - b[0])).sum()
    }
}

/// Random nonincreasing step potential with `1..=max_steps` pieces on an edge of random length.
pub fn random_monotone_step(rng: &mut impl Rng, max_steps: usize) -> StepPotential {
    let length = rng.gen_range(0.5..2.0);
    let steps = rng.gen_range(1..=max_steps.max(1));
    let mut cuts: Vec<f64> = (1..steps).map(|_| rng.gen_range(0.05..0.95) * length).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * length);
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts);
    breakpoints.push(length);
    let mut values: Vec<f64> = (0..breakpoints.len() - 1).map(|_| rng.gen_range(0.0..50.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    StepPotential::new(breakpoints, values).expect("valid by construction")
}

/// Eigenvalue count of the edge pencil against the Calogero bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalogeroCount {
    pub lambda: f64,
    pub count: usize,
    pub bound: f64,
    /// `count ≤ bound + 1`, the extra unit absorbing discretization error.
    pub holds: bool,
}

/// Discretization slack allowed on top of the Calogero bound.
pub const CALOGERO_SLACK: f64 = 1.0;

/// Counts eigenvalues above `lambda` of `∫V|u|² = μ ∫|u'|²` with Dirichlet ends,
/// using about `cells` uniform cells aligned with the steps.
pub fn calogero_count(potential: &StepPotential, lambda: f64, cells: usize) -> Result<CalogeroCount> {
    if !potential.is_monotone() {
        return Err(Error::NonMonotone);
    }
    if !(lambda > 0.0 && lambda.is_finite()) || cells < 2 {
        return Err(Error::InvalidArgument(format!("need lambda > 0 and at least two cells, got {lambda}, {cells}")));
    }
    let h = potential.length() / cells as f64;
    let mut elems: Vec<(f64, f64)> = Vec::new();
    for (b, &v) in potential.breakpoints.windows(2).zip(&potential.values) {
        let k = cells_for(b[1] - b[0], h);
        elems.extend(std::iter::repeat((((b[1] - b[0]) / k as f64), v)).take(k));
    }
    // Tridiagonal λA - B on the interior nodes; its negative pivots count eigenvalues above λ.
    let m = elems.len() - 1;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for (c, &(len, v)) in elems.iter().enumerate() {
        let stiff = lambda / len;
        let mass = v * len / 6.0;
        for (node, on) in [(c.wrapping_sub(1), c >= 1), (c, c < m)] {
            if on {
                diag[node] += stiff - 2.0 * mass;
            }
        }
        if c >= 1 && c < m {
            off[c - 1] += -stiff - mass;
        }
    }
    let scale = diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let mut count = 0;
    let mut pivot = diag[0];
    for i in 0..m {
        if i > 0 {
            pivot = diag[i] - off[i - 1] * off[i - 1] / pivot;
        }
        if pivot.abs() <= 1e-12 * scale {
            return Err(Error::ThresholdProximity { index: i, value: pivot });
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    let bound = 2.0 / std::f64::consts::PI * potential.sqrt_integral() / lambda.sqrt();
    Ok(CalogeroCount { lambda, count, bound, holds: count as f64 <= bound + CALOGERO_SLACK })
}

/// Closed-form count for constant `V = c` on `(0, a)`: eigenvalues are `c a² / (π² k²)`.
pub fn constant_potential_count(length: f64, value: f64, lambda: f64) -> usize {
    let x = length / std::f64::consts::PI * (value / lambda).sqrt();
    x.floor() as usize
}

/// Ratios `λ_n / p_n` against `[λ_min(M) min μ², λ_max(M) max μ²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
    pub ratios: Vec<f64>,
    pub holds: bool,
}

/// `masses` sorted descending are compared with `values` index by index.
pub fn envelope_check(values: &[f64], masses: &[f64], gram: &DMatrix<f64>, capacities: &[f64]) -> Envelope {
    let eig = symmetric_eigen_desc(gram).0;
    let min_cap = capacities.iter().copied().fold(f64::INFINITY, f64::min);
    let max_cap = capacities.iter().copied().fold(0.0, f64::max);
    let lower = eig.last().copied().unwrap_or(1.0) * min_cap;
    let upper = eig.first().copied().unwrap_or(1.0) * max_cap;
    let mut sorted = masses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let ratios: Vec<f64> = values.iter().zip(&sorted).map(|(l, p)| l / p).collect();
    let holds = ratios.iter().all(|&r| r >= lower && r <= upper);
    Envelope { lower, upper, ratios, holds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BoundaryMode, LatticeSpec};
    use rand::SeedableRng;

    fn segment(length: f64) -> MetricGraph {
        // two Dirichlet ends joined through a middle vertex
        MetricGraph::new(
            3,
            vec![MetricEdge { a: 0, b: 1, length: length / 2.0 }, MetricEdge { a: 1, b: 2, length: length / 2.0 }],
            [0, 2],
        )
        .unwrap()
    }

    #[test]
    fn weights_are_inverse_lengths() {
        let l = Lattice::build(LatticeSpec::new(2, 3, BoundaryMode::DirichletBoxPlusOrigin)).unwrap();
        let g = MetricGraph::from_lattice(&l, |_, _| 2.0).unwrap();
        let v = l.index(&[1, 1, 0]).unwrap();
        assert_eq!(g.combinatorial().mildness(v), 2.0);
        for (e, w) in g.edges().iter().zip(g.combinatorial().edges()) {
            assert_eq!(e.length * w.weight, 1.0);
        }
        assert!(MetricGraph::new(2, vec![MetricEdge { a: 0, b: 1, length: 0.0 }], [0]).is_err());
    }

    #[test]
    fn potential_heights_and_mass() {
        let l = Lattice::build(LatticeSpec::new(2, 3, BoundaryMode::DirichletBoxPlusOrigin)).unwrap();
        let g = MetricGraph::from_lattice(&l, |_, _| 1.0).unwrap();
        let v = l.index(&[1, 1, 0]).unwrap();
        let p = build_metric_potential(&g, &[v], &[1.0], &[0.1]).unwrap();
        assert_eq!(p.pieces.len(), 4);
        assert!(p.pieces.iter().all(|q| (q.value - 2.5).abs() < 1e-12));
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        let w = l.index(&[1, 2, 0]).unwrap();
        assert!(build_metric_potential(&g, &[v, w], &[1.0, 1.0], &[0.1, 0.1]).is_err());
        assert!(build_metric_potential(&g, &[v], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn lowest_sine_mode() {
        let cells = 128;
        let p = StepPotential::constant(1.0, 1.0).unwrap();
        // μ_1 = 1/π² for V = 1, so the count flips at λ = 1/π²
        let top = 1.0 / std::f64::consts::PI.powi(2);
        assert_eq!(calogero_count(&p, top * 1.001, cells).unwrap().count, 0);
        assert_eq!(calogero_count(&p, top * 0.999, cells).unwrap().count, 1);
    }

    #[test]
    fn linear_fields_have_combinatorial_energy() {
        let l = Lattice::build(LatticeSpec::new(2, 3, BoundaryMode::DirichletBoxPlusOrigin)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = MetricGraph::from_lattice(&l, |_, _| rng.gen_range(0.5..2.0)).unwrap();
        let mesh = discretize(&g, 0.1).unwrap();
        let mut phi = vec![0.0; mesh.node_count()];
        for v in g.combinatorial().interior_vertices() {
            phi[v] = rng.gen_range(-1.0..1.0);
        }
        let (linear, _) = pl_decompose(&mesh, &phi);
        let f = crate::graph::VertexFunction::from_vec(linear[..g.vertex_count()].to_vec());
        let expect = g.combinatorial().energy(&f);
        assert!((mesh.energy(&linear) - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn decomposition_is_orthogonal() {
        let l = Lattice::build(LatticeSpec::new(3, 2, BoundaryMode::DirichletBox)).unwrap();
        let g = MetricGraph::from_lattice(&l, |a, _| 1.0 + 0.1 * (a[0] + 2) as f64).unwrap();
        let mesh = discretize(&g, 0.3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let phi: Vec<f64> =
            (0..mesh.node_count())
                .map(|v| {
                    if v < g.vertex_count() && g.combinatorial().is_dirichlet(v) {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
        let (pl, d) = pl_decompose(&mesh, &phi);
        assert!(d[..g.vertex_count()].iter().all(|&x| x == 0.0));
        let total = mesh.energy(&phi);
        assert!(mesh.energy_pairing(&pl, &d).abs() < 1e-10 * total);
        assert!((mesh.energy(&pl) + mesh.energy(&d) - total).abs() < 1e-10 * total);
        let (pl2, d2) = pl_decompose(&mesh, &pl);
        assert!(d2.iter().all(|x| x.abs() < 1e-14) && pl2 == pl);
    }

    #[test]
    fn single_vertex_approaches_point_mass() {
        let l = Lattice::build(LatticeSpec::new(3, 3, BoundaryMode::DirichletBox)).unwrap();
        let g = MetricGraph::from_lattice(&l, |_, _| 1.0).unwrap();
        let o = l.origin();
        let sweep = epsilon_sweep(&g, &[o], &[0.7], &[0.2, 0.1, 0.05], 8).unwrap();
        assert!(sweep.monotone);
        let last = sweep.rows.last().unwrap();
        assert!(last.difference < 1e-2 * last.point_mass);
        let cap = GreenTable::new(Arc::new(SolveGreen::new(g.to_combinatorial()).unwrap())).capacity(o).unwrap();
        assert!((sweep.point_mass[0] - 0.7 * cap).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_has_empty_spectrum() {
        let g = segment(2.0);
        let mesh = discretize(&g, 0.5).unwrap();
        assert!(metric_bs_spectrum(&mesh, 0).unwrap().values.is_empty());
        assert!(metric_bs_spectrum(&mesh, 1).is_err());
    }

    #[test]
    fn resolution_rule() {
        let g = segment(2.0);
        let p = build_metric_potential(&g, &[1], &[1.0], &[0.1]).unwrap();
        assert!(matches!(discretize_with_potential(&g, &p, 4, None), Err(Error::Resolution { .. })));
        assert!(discretize_with_potential(&g, &p, 8, None).is_ok());
    }

    #[test]
    fn calogero_constant_and_zero() {
        let zero = StepPotential::constant(1.0, 0.0).unwrap();
        let r = calogero_count(&zero, 0.3, 100).unwrap();
        assert_eq!((r.count, r.bound), (0, 0.0));
        let c = StepPotential::constant(1.5, 40.0).unwrap();
        for lambda in [0.05, 0.2, 0.7, 2.0] {
            let r = calogero_count(&c, lambda, 2000).unwrap();
            assert_eq!(r.count, constant_potential_count(1.5, 40.0, lambda));
            assert!(r.holds);
        }
        let bumpy = StepPotential::new(vec![0.0, 0.5, 1.0, 1.5], vec![1.0, 3.0, 2.0]).unwrap();
        assert!(matches!(calogero_count(&bumpy, 0.1, 100), Err(Error::NonMonotone)));
    }
}
