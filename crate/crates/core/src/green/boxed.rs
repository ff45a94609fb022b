//! Green functions of lattice boxes by direct sine-transform solves.
//!
//! With the origin clamped, `h⁰_x(y) = h_x(y) - h_x(0) h_0(y) / h_0(0)`,
//! the rank-one correction for one extra Dirichlet vertex.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::{GreenMetadata, GreenMethod, GreenSource};
use crate::error::{Error, Result};
use crate::graph::VertexFunction;
use crate::lattice::{Lattice, LatticeSpec, Point};
use crate::linalg::BoxPoisson;

/// Green function of `-Δ` on the interior of a lattice box.
#[derive(Debug)]
pub struct BoxGreen {
    lattice: Lattice,
    solver: BoxPoisson,
    columns: RwLock<HashMap<(Point, bool), Arc<Vec<f64>>>>,
    diag: OnceLock<Vec<f64>>,
}

impl BoxGreen {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        let lattice = Lattice::build(spec)?;
        let solver = BoxPoisson::new(spec.dimension, spec.radius)?;
        Ok(Self { lattice, solver, columns: RwLock::new(HashMap::new()), diag: OnceLock::new() })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.lattice.spec()
    }

    /// Position of a point in the interior grid of the solver.
    fn grid_index(&self, p: &Point) -> Option<usize> {
        let spec = self.lattice.spec();
        if !spec.contains_interior(p) {
            return None;
        }
        let n = self.solver.side();
        let r = spec.radius;
        Some(p[..spec.dimension].iter().fold(0usize, |acc, &c| acc * n + (c + r - 1) as usize))
    }

    fn grid_point(&self, flat: usize) -> Point {
        let spec = self.lattice.spec();
        let n = self.solver.side();
        let mut p = [0i64; 3];
        let mut rest = flat;
        for i in (0..spec.dimension).rev() {
            p[i] = (rest % n) as i64 + 1 - spec.radius;
            rest /= n;
        }
        p
    }

    fn check_interior(&self, p: &Point) -> Result<usize> {
        let idx = self.grid_index(p).ok_or_else(|| Error::InvalidArgument(format!("{p:?} is not inside the box")))?;
        if self.lattice.spec().clamps_origin() && p.iter().all(|&c| c == 0) {
            return Err(Error::InvalidArgument("the origin is clamped".into()));
        }
        Ok(idx)
    }

    /// Column of the unclamped box.
    fn raw_column(&self, p: &Point) -> Result<Arc<Vec<f64>>> {
        let idx = self.grid_index(p).ok_or_else(|| Error::InvalidArgument(format!("{p:?} is not inside the box")))?;
        self.cached(p, true, || {
            let mut e = vec![0.0; self.solver.len()];
            e[idx] = 1.0;
            self.solver.solve(&e)
        })
    }

    fn cached(&self, p: &Point, raw: bool, make: impl FnOnce() -> Result<Vec<f64>>) -> Result<Arc<Vec<f64>>> {
        let key = (*p, raw);
        if let Some(c) = self.columns.read().expect("column cache poisoned").get(&key) {
            return Ok(Arc::clone(c));
        }
        let col = Arc::new(make()?);
        self.columns.write().expect("column cache poisoned").insert(key, Arc::clone(&col));
        Ok(col)
    }

    /// `h_x` on the interior grid, row-major.
    pub fn column(&self, x: &Point) -> Result<Arc<Vec<f64>>> {
        self.check_interior(x)?;
        if !self.lattice.spec().clamps_origin() {
            return self.raw_column(x);
        }
        let o = self.grid_index(&[0; 3]).expect("origin is interior");
        let raw = self.raw_column(x)?;
        let origin = self.raw_column(&[0; 3])?;
        self.cached(x, false, || {
            let ratio = raw[o] / origin[o];
            Ok(raw.iter().zip(origin.iter()).map(|(a, b)| a - ratio * b).collect())
        })
    }

    /// `h_x` as a function on all lattice vertices (zero on the clamps).
    pub fn column_function(&self, x: &Point) -> Result<VertexFunction> {
        let col = self.column(x)?;
        let mut f = VertexFunction::zeros(self.lattice.graph().vertex_count());
        for (flat, &v) in col.iter().enumerate() {
            let p = self.grid_point(flat);
            let id = self.lattice.index(&p).expect("grid point lies in the box");
            if !self.lattice.graph().is_dirichlet(id) {
                f[id] = v;
            }
        }
        Ok(f)
    }

    /// Capacities of every interior vertex of the unclamped box.
    fn raw_diag(&self) -> &Vec<f64> {
        self.diag.get_or_init(|| self.solver.diag_inverse())
    }

    /// Capacity at every interior grid point (zero at a clamped origin), row-major.
    pub fn all_capacities(&self) -> Result<Vec<(Point, f64)>> {
        let diag = self.raw_diag();
        let clamped = self.lattice.spec().clamps_origin();
        let origin = if clamped { Some(self.raw_column(&[0; 3])?) } else { None };
        let o = self.grid_index(&[0; 3]).expect("origin is interior");
        Ok(diag
            .iter()
            .enumerate()
            .map(|(flat, &d)| {
                let p = self.grid_point(flat);
                let value = match &origin {
                    Some(col) => d - col[flat] * col[flat] / col[o],
                    None => d,
                };
                (p, value)
            })
            .collect())
    }

    fn capacity_at(&self, x: &Point) -> Result<f64> {
        let idx = self.check_interior(x)?;
        let d = self.raw_diag()[idx];
        if self.lattice.spec().clamps_origin() {
            let col = self.raw_column(&[0; 3])?;
            let o = self.grid_index(&[0; 3]).expect("origin is interior");
            Ok(d - col[idx] * col[idx] / col[o])
        } else {
            Ok(d)
        }
    }
}

impl GreenSource for BoxGreen {
    type Vertex = Point;

    fn green(&self, x: Point, y: Point) -> Result<f64> {
        let col = self.column(&x)?;
        if self.lattice.spec().clamps_origin() && y.iter().all(|&c| c == 0) {
            return Ok(0.0);
        }
        match self.grid_index(&y) {
            Some(j) => Ok(col[j]),
            None if self.lattice.index(&y).is_some() => Ok(0.0),
            None => Err(Error::MissingGreenValue(format!("{x:?}"), format!("{y:?}"))),
        }
    }

    fn capacity(&self, x: Point) -> Result<f64> {
        self.capacity_at(&x)
    }

    fn mildness(&self, x: Point) -> f64 {
        self.lattice.index(&x).map_or(0.0, |v| self.lattice.graph().mildness(v))
    }

    fn coords(&self, x: Point) -> Vec<i64> {
        x[..self.lattice.dimension()].to_vec()
    }

    fn metadata(&self) -> GreenMetadata {
        GreenMetadata {
            method: GreenMethod::Solve,
            c_norm: 1.0,
            box_radius: Some(self.lattice.radius()),
            dimension: Some(self.lattice.dimension()),
            accuracy: 1e-12,
        }
    }
}

/// Capacity extrapolated linearly in `1/R` from boxes of radius `R/2` and `R`.
pub fn richardson_capacity(spec: LatticeSpec, x: &Point) -> Result<f64> {
    if spec.radius < 4 || spec.radius % 2 != 0 {
        return Err(Error::InvalidSpec("Richardson extrapolation needs an even radius >= 4".into()));
    }
    let coarse = BoxGreen::new(LatticeSpec { radius: spec.radius / 2, ..spec })?;
    let fine = BoxGreen::new(spec)?;
    Ok(2.0 * fine.capacity(*x)? - coarse.capacity(*x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoundaryMode;
    use crate::linalg::solve_laplacian;

    #[test]
    fn column_matches_conjugate_gradients() {
        for spec in [
            LatticeSpec::new(2, 5, BoundaryMode::DirichletBoxPlusOrigin),
            LatticeSpec::new(3, 3, BoundaryMode::DirichletBox),
        ] {
            let g = BoxGreen::new(spec).unwrap();
            let x = [1, -2, 0];
            let h = g.column_function(&x).unwrap();
            let graph = g.lattice().graph();
            let e = VertexFunction::delta(graph.vertex_count(), g.lattice().index(&x).unwrap());
            let cg = solve_laplacian(graph, e.values(), 1e-13).unwrap();
            let err = h.values().iter().zip(&cg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-11, "{spec:?}: {err}");
        }
    }

    #[test]
    fn clamped_capacity_matches_column() {
        let g = BoxGreen::new(LatticeSpec::new(2, 6, BoundaryMode::DirichletBoxPlusOrigin)).unwrap();
        for (p, cap) in g.all_capacities().unwrap().into_iter().step_by(7) {
            if p == [0; 3] {
                assert!(cap.abs() < 1e-14);
                continue;
            }
            assert!((cap - g.green(p, p).unwrap()).abs() < 1e-13);
        }
        assert_eq!(g.green([2, 1, 0], [0, 0, 0]).unwrap(), 0.0);
        assert_eq!(g.green([2, 1, 0], [6, 0, 0]).unwrap(), 0.0);
        assert!(g.green([0, 0, 0], [1, 0, 0]).is_err());
    }

    #[test]
    fn cubic_capacity_extrapolates() {
        let spec = LatticeSpec::new(3, 16, BoundaryMode::DirichletBox);
        let c = richardson_capacity(spec, &[0; 3]).unwrap();
        assert!((c - 0.252731).abs() < 2e-3, "{c}");
        assert!(c > 1.0 / 6.0);
    }
}
