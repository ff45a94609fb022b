//! Heat kernel `exp(tΔ)` on Dirichlet truncations and the global-dimension fit.
//!
//! The semigroup is applied through its Chebyshev expansion. With
//! `L = -Δ`, spectrum in `[0, λ]`, and `Y = 2L/λ - I`,
//!
//! ```text
//! exp(-tL) = e^{-a} I_0(a) + 2 Σ_{k≥1} (-1)^k e^{-a} I_k(a) T_k(Y),   a = tλ/2,
//! ```
//!
//! and the exponentially scaled Bessel values come from Miller's backward
//! recurrence normalized by `e^{a} = I_0(a) + 2 Σ I_k(a)`. On a box the
//! Dirichlet Laplacian is a Kronecker sum of path Laplacians, so the
//! diagonal of the `d`-dimensional kernel is the `d`-th power of the path
//! kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::lattice::{BoundaryMode, Lattice, LatticeSpec};

/// Boundary mass above which a heat-kernel sample is flagged as truncation-dominated.
pub const VALIDITY_TOLERANCE: f64 = 1e-6;

const COEFF_CUTOFF: f64 = 1e-19;

/// `e^{-a} I_k(a)` for `k = 0, 1, …` until the values drop below `1e-19`.
pub fn scaled_bessel_i(a: f64) -> Vec<f64> {
    assert!(a >= 0.0 && a.is_finite(), "Bessel argument must be finite and nonnegative");
    if a == 0.0 {
        return vec![1.0];
    }
    let start = (20.0 * a.sqrt() + 60.0).ceil() as usize;
    let mut f = vec![0.0f64; start + 2];
    f[start] = 1e-280;
    for k in (1..=start).rev() {
        f[k - 1] = (2.0 * k as f64 / a) * f[k] + f[k + 1];
        if f[k - 1] > 1e250 {
            for x in &mut f[k - 1..] {
                *x *= 1e-250;
            }
        }
    }
    let norm = f[0] + 2.0 * f[1..].iter().sum::<f64>();
    let mut out: Vec<f64> = f.iter().map(|x| x / norm).collect();
    let keep = out.iter().rposition(|&x| x > COEFF_CUTOFF).map_or(1, |p| p + 1);
    out.truncate(keep);
    out
}

/// Infinite-lattice diagonal `P(t; 0, 0) = (e^{-2t} I_0(2t))^d`.
pub fn reference_heat_diag(dimension: usize, t: f64) -> f64 {
    scaled_bessel_i(2.0 * t)[0].powi(dimension as i32)
}

/// Applies `exp(tΔ)` to `f` on a graph with Dirichlet clamps.
pub fn heat_apply(graph: &WeightedGraph, f: &VertexFunction, t: f64) -> Result<VertexFunction> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("heat time must be nonnegative, got {t}")));
    }
    f.check_admissible(graph)?;
    let n = graph.vertex_count();
    let lambda_max = 2.0 * graph.max_mildness();
    if t == 0.0 || lambda_max == 0.0 {
        return Ok(f.clone());
    }
    let coeffs = scaled_bessel_i(0.5 * t * lambda_max);
    let scale = 2.0 / lambda_max;

    // Y v = scale * (-Δ v) - v
    let apply_y = |v: &[f64], out: &mut [f64]| {
        graph.laplacian_into(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o = -scale * *o - x;
        }
    };

    let mut prev = f.values().to_vec();
    let mut result: Vec<f64> = prev.iter().map(|x| coeffs[0] * x).collect();
    if coeffs.len() == 1 {
        return Ok(VertexFunction::from_vec(result));
    }
    let mut cur = vec![0.0; n];
    apply_y(&prev, &mut cur);
    let mut next = vec![0.0; n];
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        let ck = if k % 2 == 0 { 2.0 * c } else { -2.0 * c };
        for (r, x) in result.iter_mut().zip(&cur) {
            *r += ck * x;
        }
        if k + 1 == coeffs.len() {
            break;
        }
        apply_y(&cur, &mut next);
        for (nx, p) in next.iter_mut().zip(&prev) {
            *nx = 2.0 * *nx - p;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(VertexFunction::from_vec(result))
}

/// One sample of the heat-kernel diagonal at the origin of a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatDiag {
    pub t: f64,
    pub value: f64,
    /// Mass of `exp(tΔ)δ_0` on the layer of interior vertices next to the clamped boundary.
    pub boundary_mass: f64,
}

impl HeatDiag {
    pub fn within_window(&self) -> bool {
        self.boundary_mass <= VALIDITY_TOLERANCE
    }
}

/// Path kernel `exp(tΔ)δ_0` on `[-R, R]` with clamped ends.
pub fn path_heat_profile(radius: i64, t: f64) -> Result<(Lattice, VertexFunction)> {
    let lattice = Lattice::build(LatticeSpec::new(1, radius, BoundaryMode::DirichletBox))?;
    let n = lattice.graph().vertex_count();
    let u = heat_apply(lattice.graph(), &VertexFunction::delta(n, lattice.origin()), t)?;
    Ok((lattice, u))
}

/// `P(t; 0, 0)` on the Dirichlet box of `spec` (the origin clamp, if any, is ignored).
pub fn heat_diag(spec: &LatticeSpec, t: f64) -> Result<HeatDiag> {
    spec.validate()?;
    let (lattice, u) = path_heat_profile(spec.radius, t)?;
    let d = spec.dimension as i32;
    let r = spec.radius;
    let at = |c: i64| lattice.index(&[c, 0, 0]).map_or(0.0, |v| u[v]);
    let centre = at(0);
    let total: f64 = u.values().iter().sum();
    let edge = if r > 1 { at(r - 1) + at(1 - r) } else { at(0) };
    let boundary_mass = (total.powi(d) - (total - edge).powi(d)).max(0.0);
    Ok(HeatDiag { t, value: centre.powi(d), boundary_mass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub dimension: f64,
    pub slope: f64,
    pub intercept: f64,
    pub samples: Vec<HeatDiag>,
}

/// Least-squares slope `s` of `log P` against `log t`; returns `D = -2s`.
pub fn estimate_dimension(spec: &LatticeSpec, t_grid: &[f64]) -> Result<DimensionFit> {
    if t_grid.len() < 4 {
        return Err(Error::InvalidArgument(format!("dimension fit needs at least 4 times, got {}", t_grid.len())));
    }
    if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be positive and increasing".into()));
    }
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let s = heat_diag(spec, t)?;
        if !s.within_window() {
            return Err(Error::ValidityWindow { t, boundary_mass: s.boundary_mass });
        }
        samples.push(s);
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.t.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.value.ln()).collect();
    let (slope, intercept) = least_squares_line(&xs, &ys);
    Ok(DimensionFit { dimension: -2.0 * slope, slope, intercept, samples })
}

pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-spaced grid of `count` times on `[t0, t1]`.
pub fn log_grid(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let (a, b) = (t0.ln(), t1.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}
