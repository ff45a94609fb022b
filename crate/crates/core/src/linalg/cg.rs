//! Jacobi-preconditioned conjugate gradients for `-Δu = f` with Dirichlet clamps.

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Solves `-Δu = rhs` on the interior vertices; `u` vanishes on the Dirichlet set.
///
/// Iterates until the true residual satisfies `‖-Δu - rhs‖_∞ ≤ tol` on the
/// interior. `rhs` values on Dirichlet vertices are ignored.
pub fn solve_laplacian(graph: &WeightedGraph, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = graph.vertex_count();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
    }
    if !graph.has_dirichlet() {
        return Err(Error::Singular("graph Laplacian without Dirichlet vertices is singular".into()));
    }
    let interior: Vec<bool> = (0..n).map(|v| !graph.is_dirichlet(v)).collect();
    let diag: Vec<f64> = (0..n).map(|v| graph.mildness(v)).collect();
    let b: Vec<f64> = (0..n).map(|v| if interior[v] { rhs[v] } else { 0.0 }).collect();

    let apply = |x: &[f64], out: &mut [f64]| {
        graph.laplacian_into(x, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    let max_iter = 20 * n + 1000;
    let mut x = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut total = 0;
    let mut residual = inf_norm(&b);
    // A few restarts guard against drift between the recursive and the true residual.
    for _ in 0..5 {
        apply(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        residual = inf_norm(&r);
        if residual <= tol {
            return Ok(x);
        }
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        while total < max_iter {
            total += 1;
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if inf_norm(&r) <= 0.25 * tol {
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    Err(Error::NotConverged { iterations: total, residual })
}
