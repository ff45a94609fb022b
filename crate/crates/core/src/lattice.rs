//! Box truncations of `ℤ^d` with Dirichlet boundary conditions.
//!
//! Vertices are indexed lexicographically over their coordinates, first
//! coordinate most significant. Under this ordering the Laplacian of a box
//! of side `s` is banded with bandwidth `s^{d-1}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, VertexFunction, WeightedGraph};

/// Maximum lattice dimension supported by the box machinery.
pub const MAX_DIM: usize = 3;

/// A lattice point; unused trailing coordinates are zero.
pub type Point = [i64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Clamp the outer layer `max_i |x_i| = R`.
    DirichletBox,
    /// Clamp the outer layer and the origin.
    DirichletBoxPlusOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatticeSpec {
    pub dimension: usize,
    pub radius: i64,
    pub boundary_mode: BoundaryMode,
}

impl LatticeSpec {
    pub fn new(dimension: usize, radius: i64, boundary_mode: BoundaryMode) -> Self {
        Self { dimension, radius, boundary_mode }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.dimension) {
            return Err(Error::InvalidSpec(format!("dimension {} not in 1..=3", self.dimension)));
        }
        if self.radius < 1 {
            return Err(Error::InvalidSpec(format!("radius {} leaves no interior", self.radius)));
        }
        if self.boundary_mode == BoundaryMode::DirichletBoxPlusOrigin && self.radius < 2 {
            return Err(Error::InvalidSpec("origin clamp needs radius >= 2".into()));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn clamps_origin(&self) -> bool {
        self.boundary_mode == BoundaryMode::DirichletBoxPlusOrigin
    }

    /// Same box without the origin clamp.
    pub fn unclamped(&self) -> Self {
        Self { boundary_mode: BoundaryMode::DirichletBox, ..*self }
    }

    /// Checks that a point lies strictly inside the box.
    pub fn contains_interior(&self, p: &Point) -> bool {
        p[..self.dimension].iter().all(|&c| c.abs() < self.radius) && p[self.dimension..].iter().all(|&c| c == 0)
    }
}

/// A built lattice box: the spec together with its graph.
#[derive(Debug, Clone)]
pub struct Lattice {
    spec: LatticeSpec,
    graph: WeightedGraph,
}

impl Lattice {
    /// Builds the box `[-R, R]^d` with unit weights and the requested clamps.
    pub fn build(spec: LatticeSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dimension;
        let side = spec.side();
        let n = side.pow(d as u32);
        let mut edges = Vec::with_capacity(d * n);
        let strides: Vec<usize> = (0..d).map(|i| side.pow((d - 1 - i) as u32)).collect();
        for v in 0..n {
            for &stride in &strides {
                if (v / stride) % side + 1 < side {
                    edges.push(Edge { a: v, b: v + stride, weight: 1.0 });
                }
            }
        }
        let r = spec.radius;
        let mut dirichlet = Vec::new();
        for v in 0..n {
            let p = Self::decode(v, d, side, r);
            let on_boundary = p[..d].iter().any(|&c| c.abs() == r);
            let is_origin = p.iter().all(|&c| c == 0);
            if on_boundary || (is_origin && spec.clamps_origin()) {
                dirichlet.push(v);
            }
        }
        let graph = WeightedGraph::new(n, edges, dirichlet)?;
        Ok(Self { spec, graph })
    }

    fn decode(mut v: usize, d: usize, side: usize, r: i64) -> Point {
        let mut p = [0i64; MAX_DIM];
        for i in (0..d).rev() {
            p[i] = (v % side) as i64 - r;
            v /= side;
        }
        p
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn radius(&self) -> i64 {
        self.spec.radius
    }

    pub fn coords(&self, v: usize) -> Point {
        Self::decode(v, self.spec.dimension, self.spec.side(), self.spec.radius)
    }

    /// Vertex id of a point, if it lies in the box.
    pub fn index(&self, p: &Point) -> Option<usize> {
        let r = self.spec.radius;
        let side = self.spec.side();
        let d = self.spec.dimension;
        if p[d..].iter().any(|&c| c != 0) {
            return None;
        }
        let mut v = 0usize;
        for &c in &p[..d] {
            if c.abs() > r {
                return None;
            }
            v = v * side + (c + r) as usize;
        }
        Some(v)
    }

    pub fn origin(&self) -> usize {
        self.index(&[0; MAX_DIM]).expect("origin is always in the box")
    }

    /// Boundary vertices, i.e. the outer layer (not the origin clamp).
    pub fn boundary_count(&self) -> usize {
        let r = self.spec.radius;
        let d = self.spec.dimension;
        (0..self.graph.vertex_count()).filter(|&v| self.coords(v)[..d].iter().any(|&c| c.abs() == r)).count()
    }

    /// Squared Euclidean norm of a vertex position.
    pub fn norm_sq(&self, v: usize) -> i64 {
        self.coords(v).iter().map(|c| c * c).sum()
    }

    /// Interior vertices ordered by increasing radius, lexicographic tie-break,
    /// keeping only those whose incident weight sum is at most `mildness_cap`.
    pub fn candidates_by_radius(&self, mildness_cap: f64) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.graph.interior_vertices().filter(|&v| self.graph.mildness(v) <= mildness_cap).collect();
        out.sort_by_key(|&v| (self.norm_sq(v), self.coords(v)));
        out
    }

    /// Weighted Hardy quotient on the origin-clamped two-dimensional box:
    /// `Σ_{x≠0} |f(x)|² |x|^{-2} (log|x| + 2)^{-2} / a[f]`.
    pub fn hardy_ratio(&self, f: &VertexFunction) -> Result<f64> {
        if self.spec.dimension != 2 || !self.spec.clamps_origin() {
            return Err(Error::InvalidArgument("Hardy quotient needs the origin-clamped planar box".into()));
        }
        f.check_admissible(&self.graph)?;
        let energy = self.graph.energy(f);
        if energy == 0.0 {
            return Err(Error::InvalidArgument("function has zero energy".into()));
        }
        let weighted: f64 = f
            .support()
            .map(|v| {
                let r2 = self.norm_sq(v) as f64;
                let log_term = 0.5 * r2.ln() + 2.0;
                f[v] * f[v] / (r2 * log_term * log_term)
            })
            .sum();
        Ok(weighted / energy)
    }

    /// Writes `x_1,…,x_d,value` rows for the support of `f`.
    pub fn write_function_csv<W: Write>(&self, f: &VertexFunction, out: W) -> Result<()> {
        let d = self.spec.dimension;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for v in 0..f.len() {
            if f[v] == 0.0 {
                continue;
            }
            let p = self.coords(v);
            let mut rec: Vec<String> = p[..d].iter().map(|c| c.to_string()).collect();
            rec.push(format!("{:?}", f[v]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
