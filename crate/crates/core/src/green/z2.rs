//! The planar potential kernel and the Green function of `ℤ²` clamped at the origin.
//!
//! `A(x) = (2π)^{-2} ∬_{(-π,π)²} (1 - cos(x·θ)) / Z(θ) dθ`, `Z = 1 - (cos θ₁ + cos θ₂)/2`,
//! vanishes at the origin, grows like `(2/π) log|x|` and satisfies
//! `ΔA = 4δ₀`. The clamped Green function is
//! `h_x(y) = (A(x) + A(y) - A(x - y)) / c_norm` with `c_norm` calibrated from
//! the reproducing identity `a[f, h_x] = f(x)`.
//!
//! Two evaluation routes are kept apart. [`potential_kernel`] integrates out
//! `θ₁` in closed form,
//!
//! ```text
//! A(x) = (2/π) ∫_0^π (1 - ρ(t)^{|x₁|} cos(x₂t)) / √(δ(2+δ)) dt,
//! δ = 1 - cos t,  ρ = 1 + δ - √(δ(2+δ)),   |x₁| ≥ |x₂|,
//! ```
//!
//! and integrates the remaining bounded integrand adaptively on dyadic
//! panels. [`fundamental_z2`] applies a tensor-product Gauss–Legendre panel
//! rule to the two-dimensional integral directly.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GreenMetadata, GreenMethod, GreenSource};
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::quadrature::{gauss_legendre, integrate_adaptive};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest coordinate magnitude accepted by the kernel.
pub const MAX_COORDINATE: i64 = 1 << 52;

const PI: f64 = std::f64::consts::PI;

/// Canonical representative `(a, b)` with `a ≥ b ≥ 0` under the dihedral symmetry.
fn canonical(x: [i64; 2]) -> [i64; 2] {
    let (a, b) = (x[0].unsigned_abs(), x[1].unsigned_abs());
    [a.max(b) as i64, a.min(b) as i64]
}

/// `A(x)` by the reduced one-dimensional integral.
pub fn potential_kernel(x: [i64; 2]) -> Result<f64> {
    if x.iter().any(|c| c.unsigned_abs() > MAX_COORDINATE as u64) {
        return Err(Error::InvalidArgument(format!("offset {x:?} exceeds the coordinate cap 2^52")));
    }
    let [a, b] = canonical(x);
    if a == 0 {
        return Ok(0.0);
    }
    let (a, b) = (a as f64, b as f64);
    let integrand = |t: f64| {
        let s = (0.5 * t).sin();
        let delta = 2.0 * s * s;
        let root = (delta * (2.0 + delta)).sqrt();
        let log_rho = -(delta + root).ln_1p();
        let decay = (a * log_rho).exp();
        let sb = (0.5 * b * t).sin();
        (-(a * log_rho).exp_m1() + 2.0 * decay * sb * sb) / root
    };
    // Features sit at t ~ 1/|x|, so dyadic panels reach well below that scale.
    let levels = (a.log2().ceil() as i32).max(0) + 50;
    let mut total = 0.0;
    let mut hi = PI;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        total += integrate_adaptive(&integrand, lo, hi, 1e-17, 1e-15)?;
        hi = lo;
    }
    total += integrate_adaptive(&integrand, 0.0, hi, 1e-17, 1e-15)?;
    Ok(2.0 / PI * total)
}

/// `(1/π)(2 log|x| + log 8 + 2γ)`.
pub fn fundamental_z2_asymptotic(x: [i64; 2]) -> Result<f64> {
    if x == [0, 0] {
        return Err(Error::InvalidArgument("asymptotic kernel is undefined at the origin".into()));
    }
    let r = ((x[0] as f64).powi(2) + (x[1] as f64).powi(2)).sqrt();
    Ok((2.0 * r.ln() + 8f64.ln() + 2.0 * EULER_GAMMA) / PI)
}

/// Tensor-product panel rule for the two-dimensional kernel integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureScheme {
    /// Uniform panels per axis on `[0, π]` (raised to at least `2|x|∞`).
    pub panels: usize,
    /// Gauss–Legendre nodes per panel and axis.
    pub order: usize,
    /// Dyadic breakpoints `π 2^{-k}` added toward `θ = 0`.
    pub dyadic_levels: usize,
    /// Integrate the swap-symmetrized integrand over `θ₁ ≥ θ₂` only.
    pub symmetric: bool,
    pub target: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self { panels: 8, order: 12, dyadic_levels: 24, symmetric: true, target: 1e-10, max_refinements: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureResult {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub difference: f64,
    pub panels: usize,
    pub refinements: usize,
}

struct AxisNodes {
    weights: Vec<f64>,
    half_sin_sq: Vec<f64>,
    cos_a: Vec<f64>,
    cos_b: Vec<f64>,
    /// Node range of each interval.
    spans: Vec<(usize, usize)>,
}

fn axis_nodes(x: [i64; 2], panels: usize, levels: usize, order: usize) -> AxisNodes {
    let (gx, gw) = gauss_legendre(order);
    let mut breaks: Vec<f64> = (0..=panels).map(|j| PI * j as f64 / panels as f64).collect();
    breaks.extend((1..=levels).map(|k| PI * 0.5f64.powi(k as i32)));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut nodes = AxisNodes { weights: vec![], half_sin_sq: vec![], cos_a: vec![], cos_b: vec![], spans: vec![] };
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let start = nodes.weights.len();
        for (t, wt) in gx.iter().zip(&gw) {
            let theta = c + h * t;
            let s = (0.5 * theta).sin();
            nodes.weights.push(h * wt);
            nodes.half_sin_sq.push(s * s);
            nodes.cos_a.push((x[0] as f64 * theta).cos());
            nodes.cos_b.push((x[1] as f64 * theta).cos());
        }
        nodes.spans.push((start, nodes.weights.len()));
    }
    nodes
}

fn tensor_rule(x: [i64; 2], panels: usize, levels: usize, order: usize, symmetric: bool) -> f64 {
    let ax = axis_nodes(x, panels, levels, order);
    let mut total = 0.0;
    let nspan = ax.spans.len();
    for i in 0..nspan {
        let jmax = if symmetric { i + 1 } else { nspan };
        for j in 0..jmax {
            let factor = if symmetric && i != j { 2.0 } else { 1.0 };
            let (s1, e1) = ax.spans[i];
            let (s2, e2) = ax.spans[j];
            let mut panel = 0.0;
            for p in s1..e1 {
                for q in s2..e2 {
                    let z = ax.half_sin_sq[p] + ax.half_sin_sq[q];
                    let num = if symmetric {
                        1.0 - 0.5 * (ax.cos_a[p] * ax.cos_b[q] + ax.cos_a[q] * ax.cos_b[p])
                    } else {
                        1.0 - ax.cos_a[p] * ax.cos_b[q]
                    };
                    panel += ax.weights[p] * ax.weights[q] * num / z;
                }
            }
            total += factor * panel;
        }
    }
    total / (PI * PI)
}

/// `A(x)` by the two-dimensional panel rule, doubling the panels until two
/// successive levels differ by less than the target.
pub fn fundamental_z2(x: [i64; 2], scheme: &QuadratureScheme) -> Result<QuadratureResult> {
    if scheme.order == 0 || scheme.panels == 0 {
        return Err(Error::InvalidArgument("quadrature scheme needs panels and nodes".into()));
    }
    if x == [0, 0] {
        return Ok(QuadratureResult { value: 0.0, difference: 0.0, panels: scheme.panels, refinements: 0 });
    }
    let reach = x[0].unsigned_abs().max(x[1].unsigned_abs()) as usize;
    let mut panels = scheme.panels.max(2 * reach);
    let mut levels = scheme.dyadic_levels;
    let mut previous = tensor_rule(x, panels, levels, scheme.order, scheme.symmetric);
    let mut difference = f64::INFINITY;
    for refinement in 1..=scheme.max_refinements {
        panels *= 2;
        levels += 4;
        let value = tensor_rule(x, panels, levels, scheme.order, scheme.symmetric);
        difference = (value - previous).abs();
        if difference < scheme.target {
            return Ok(QuadratureResult { value, difference, panels, refinements: refinement });
        }
        previous = value;
    }
    Err(Error::AccuracyNotReached { target: scheme.target, achieved: difference })
}

const CACHE_REACH: i64 = 4096;

/// Thread-safe memo of `A` keyed by the canonical offset.
#[derive(Debug, Default)]
pub struct Z2Kernel {
    cache: RwLock<HashMap<[i64; 2], f64>>,
}

impl Z2Kernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, x: [i64; 2]) -> Result<f64> {
        let key = canonical(x);
        if let Some(&v) = self.cache.read().expect("kernel cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = potential_kernel(key)?;
        // far offsets are rarely revisited; keep the memo small
        if key[0] <= CACHE_REACH {
            self.cache.write().expect("kernel cache poisoned").insert(key, v);
        }
        Ok(v)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().expect("kernel cache poisoned").len()
    }
}

/// `a[f, h] = Σ_e (f(u) - f(v))(h(u) - h(v))` on `ℤ²` for finitely supported `f`.
pub fn z2_energy_pairing(f: &HashMap<[i64; 2], f64>, h: impl Fn([i64; 2]) -> Result<f64>) -> Result<f64> {
    let mut keys: Vec<&[i64; 2]> = f.keys().collect();
    keys.sort();
    let mut total = 0.0;
    for &p in keys {
        let fp = f[&p];
        let hp = h(p)?;
        for q in [[p[0] + 1, p[1]], [p[0] - 1, p[1]], [p[0], p[1] + 1], [p[0], p[1] - 1]] {
            match f.get(&q) {
                // interior edges are visited from both ends
                Some(&fq) if q > p => total += (fp - fq) * (hp - h(q)?),
                Some(_) => {}
                None => total += fp * (hp - h(q)?),
            }
        }
    }
    Ok(total)
}

/// Outcome of the normalization fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Calibration {
    pub c_norm: f64,
    pub samples: usize,
    /// Largest `|a[f, h_x] - f(x)|` over the samples with the fitted constant.
    pub max_residual: f64,
}

/// Fits `c_norm` by least squares on `a[f, A(x) + A(·) - A(x - ·)] = c_norm f(x)`
/// over random finitely supported `f` with `f(0) = 0`.
pub fn calibrate_c_norm(kernel: &Z2Kernel, samples: usize, seed: u64) -> Result<Calibration> {
    if samples == 0 {
        return Err(Error::InvalidArgument("calibration needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = loop {
            let p = [rng.gen_range(-4..=4), rng.gen_range(-4..=4)];
            if p != [0, 0] {
                break p;
            }
        };
        let f = random_patch_function(&mut rng, x, 4);
        let ax = kernel.value(x)?;
        let raw =
            |y: [i64; 2]| -> Result<f64> { Ok(ax + kernel.value(y)? - kernel.value([x[0] - y[0], x[1] - y[1]])?) };
        let pairing = z2_energy_pairing(&f, raw)?;
        pairs.push((pairing, f.get(&x).copied().unwrap_or(0.0)));
    }
    let num: f64 = pairs.iter().map(|(p, fx)| p * fx).sum();
    let den: f64 = pairs.iter().map(|(_, fx)| fx * fx).sum();
    if den == 0.0 {
        return Err(Error::Singular("calibration samples never touch the source".into()));
    }
    let c_norm = num / den;
    let max_residual = pairs.iter().map(|(p, fx)| (p / c_norm - fx).abs()).fold(0.0, f64::max);
    Ok(Calibration { c_norm, samples, max_residual })
}

/// Random function on the square of half-width `reach` around the origin,
/// vanishing at the origin and with a nonzero value at `x`.
pub fn random_patch_function(rng: &mut impl Rng, x: [i64; 2], reach: i64) -> HashMap<[i64; 2], f64> {
    let mut f = HashMap::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            if (i, j) != (0, 0) && rng.gen_bool(0.5) {
                f.insert([i, j], rng.gen_range(-1.0..1.0));
            }
        }
    }
    f.insert(x, rng.gen_range(0.5..1.5));
    f
}

/// Green function of `ℤ²` with the origin clamped.
#[derive(Debug)]
pub struct Z2Green {
    kernel: Z2Kernel,
    c_norm: f64,
}

impl Z2Green {
    pub fn new(c_norm: f64) -> Result<Self> {
        if !(c_norm > 0.0 && c_norm.is_finite()) {
            return Err(Error::InvalidArgument(format!("normalization {c_norm} must be positive")));
        }
        Ok(Self { kernel: Z2Kernel::new(), c_norm })
    }

    /// Calibrates the normalization and returns the source together with the fit.
    pub fn calibrated(samples: usize, seed: u64) -> Result<(Self, Calibration)> {
        let kernel = Z2Kernel::new();
        let cal = calibrate_c_norm(&kernel, samples, seed)?;
        Ok((Self { kernel, c_norm: cal.c_norm }, cal))
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn kernel(&self) -> &Z2Kernel {
        &self.kernel
    }

    pub fn value2(&self, x: [i64; 2], y: [i64; 2]) -> Result<f64> {
        if x == [0, 0] {
            return Err(Error::InvalidArgument("the origin is clamped; h_0 does not exist".into()));
        }
        if y == [0, 0] {
            return Ok(0.0);
        }
        let d = [x[0] - y[0], x[1] - y[1]];
        Ok((self.kernel.value(x)? + self.kernel.value(y)? - self.kernel.value(d)?) / self.c_norm)
    }

    /// `‖-Δh_x - δ_x‖_∞` over the square of half-width `reach` around `x`, origin excluded.
    pub fn residual(&self, x: [i64; 2], reach: i64) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in -reach..=reach {
            for j in -reach..=reach {
                let y = [x[0] + i, x[1] + j];
                if y == [0, 0] {
                    continue;
                }
                let mut lap = 4.0 * self.value2(x, y)?;
                for q in [[y[0] + 1, y[1]], [y[0] - 1, y[1]], [y[0], y[1] + 1], [y[0], y[1] - 1]] {
                    lap -= self.value2(x, q)?;
                }
                let delta = if y == x { 1.0 } else { 0.0 };
                worst = worst.max((lap - delta).abs());
            }
        }
        Ok(worst)
    }
}

fn planar(p: Point) -> Result<[i64; 2]> {
    if p[2] != 0 {
        return Err(Error::InvalidArgument(format!("{p:?} is not a planar point")));
    }
    Ok([p[0], p[1]])
}

impl GreenSource for Z2Green {
    type Vertex = Point;

    fn green(&self, x: Point, y: Point) -> Result<f64> {
        self.value2(planar(x)?, planar(y)?)
    }

    fn mildness(&self, _x: Point) -> f64 {
        4.0
    }

    fn coords(&self, x: Point) -> Vec<i64> {
        vec![x[0], x[1]]
    }

    fn metadata(&self) -> GreenMetadata {
        GreenMetadata {
            method: GreenMethod::QuadratureFormula,
            c_norm: self.c_norm,
            box_radius: None,
            dimension: Some(2),
            accuracy: 1e-12,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_known_values() {
        assert_eq!(potential_kernel([0, 0]).unwrap(), 0.0);
        assert!((potential_kernel([1, 0]).unwrap() - 1.0).abs() < 1e-13);
        assert!((potential_kernel([1, 1]).unwrap() - 4.0 / PI).abs() < 1e-13);
        // A(2,0) = 4 - 8/π
        assert!((potential_kernel([2, 0]).unwrap() - (4.0 - 8.0 / PI)).abs() < 1e-13);
    }

    #[test]
    fn kernel_symmetry() {
        let a = potential_kernel([3, -2]).unwrap();
        for p in [[-3, 2], [2, 3], [-2, -3], [3, 2]] {
            assert_eq!(potential_kernel(p).unwrap(), a);
        }
    }

    #[test]
    fn tensor_rule_agrees_with_reduced_integral() {
        let scheme = QuadratureScheme::default();
        for x in [[1, 0], [1, 1], [3, 2], [0, 5]] {
            let q = fundamental_z2(x, &scheme).unwrap();
            let r = potential_kernel(x).unwrap();
            assert!((q.value - r).abs() < 1e-10, "{x:?}: {} vs {}", q.value, r);
            assert!(q.difference < 1e-10);
        }
    }

    #[test]
    fn unsymmetrized_rule_matches() {
        let scheme = QuadratureScheme { symmetric: false, ..QuadratureScheme::default() };
        let q = fundamental_z2([2, 1], &scheme).unwrap();
        assert!((q.value - potential_kernel([2, 1]).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn asymptotic_rejects_origin() {
        assert!(fundamental_z2_asymptotic([0, 0]).is_err());
        let far = potential_kernel([1000, 0]).unwrap();
        assert!((far - fundamental_z2_asymptotic([1000, 0]).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn clamped_green_basics() {
        let g = Z2Green::new(4.0).unwrap();
        assert_eq!(g.value2([3, 1], [0, 0]).unwrap(), 0.0);
        assert!((g.value2([1, 0], [1, 0]).unwrap() - 0.5).abs() < 1e-13);
        assert_eq!(g.value2([3, 1], [-2, 5]).unwrap(), g.value2([-2, 5], [3, 1]).unwrap());
        assert!(g.value2([0, 0], [1, 0]).is_err());
    }

    #[test]
    fn calibration_recovers_four() {
        let (g, cal) = Z2Green::calibrated(8, 7).unwrap();
        assert!((cal.c_norm - 4.0).abs() < 1e-10, "{}", cal.c_norm);
        assert!(cal.max_residual < 1e-10);
        assert!(g.residual([2, -1], 3).unwrap() < 1e-10);
    }
}
