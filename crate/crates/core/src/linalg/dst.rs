//! Fast Poisson solver on the interior of a Dirichlet box via the type-I sine transform.
//!
//! With `n = 2R - 1` interior points per axis and `m = n + 1`, the vectors
//! `s_k(j) = √(2/m) sin(πjk/m)` diagonalize the path Laplacian with
//! eigenvalues `2 - 2cos(πk/m)`, and the box Laplacian is their Kronecker sum.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Solver for `-Δu = f` on `{1..n}^d` with zero values outside.
pub struct BoxPoisson {
    dimension: usize,
    n: usize,
    eig: Vec<f64>,
    sine_fft: Arc<dyn Fft<f64>>,
    cosine_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BoxPoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxPoisson").field("dimension", &self.dimension).field("n", &self.n).finish()
    }
}

impl BoxPoisson {
    /// Solver for the box `[-R, R]^d` (interior side `2R - 1`).
    pub fn new(dimension: usize, radius: i64) -> Result<Self> {
        if !(1..=3).contains(&dimension) || radius < 1 {
            return Err(Error::InvalidSpec(format!(
                "box solver needs d in 1..=3 and R >= 1 (got d={dimension}, R={radius})"
            )));
        }
        let n = (2 * radius - 1) as usize;
        let m = n + 1;
        let eig = (0..=n).map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / m as f64).cos()).collect();
        let mut planner = FftPlanner::new();
        let sine_fft = planner.plan_fft_forward(2 * m);
        let cosine_fft = planner.plan_fft_forward(m);
        Ok(Self { dimension, n, eig, sine_fft, cosine_fft })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Interior points per axis.
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Applies the orthonormal sine transform along one axis of the row-major grid.
    fn sine_axis(&self, data: &mut [f64], axis: usize) {
        let n = self.n;
        let m = n + 1;
        let stride = n.pow((self.dimension - 1 - axis) as u32);
        let scale = -0.5 * (2.0 / m as f64).sqrt();
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * m];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.sine_fft.get_inplace_scratch_len()];
        let outer = data.len() / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for j in 0..n {
                    let x = data[base + j * stride];
                    buf[j + 1] = Complex::new(x, 0.0);
                    buf[2 * m - 1 - j] = Complex::new(-x, 0.0);
                }
                self.sine_fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    data[base + k * stride] = scale * buf[k + 1].im;
                }
            }
        }
    }

    fn eigenvalue(&self, flat: usize) -> f64 {
        let mut rest = flat;
        let mut total = 0.0;
        for _ in 0..self.dimension {
            total += self.eig[rest % self.n + 1];
            rest /= self.n;
        }
        total
    }

    /// Solves `-Δu = f`; `f` is indexed row-major over the interior grid.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: rhs.len() });
        }
        let mut u = rhs.to_vec();
        for axis in 0..self.dimension {
            self.sine_axis(&mut u, axis);
        }
        for (flat, x) in u.iter_mut().enumerate() {
            *x /= self.eigenvalue(flat);
        }
        for axis in 0..self.dimension {
            self.sine_axis(&mut u, axis);
        }
        Ok(u)
    }

    /// Diagonal of the inverse Laplacian at every interior point.
    ///
    /// `G(j,j) = m^{-d} Σ_k Π_i (1 - cos(2πk_i j_i/m)) / λ_k`; expanding the
    /// product turns each term into a separable cosine transform of `1/λ`.
    pub fn diag_inverse(&self) -> Vec<f64> {
        let d = self.dimension;
        let n = self.n;
        let m = n + 1;
        // F(ω) = Σ_{k∈[1,n]^d} Π_i cos(2πk_iω_i/m) / λ_k on the full grid ω ∈ [0, m)^d.
        let total = m.pow(d as u32);
        let mut f = vec![0.0; total];
        for (flat, x) in f.iter_mut().enumerate() {
            let mut rest = flat;
            let mut lam = 0.0;
            let mut zero = false;
            for _ in 0..d {
                let k = rest % m;
                rest /= m;
                if k == 0 {
                    zero = true;
                    break;
                }
                lam += self.eig[k];
            }
            if !zero {
                *x = 1.0 / lam;
            }
        }
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.cosine_fft.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = m.pow((d - 1 - axis) as u32);
            let outer = total / (m * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * m * stride + s;
                    for k in 0..m {
                        buf[k] = Complex::new(f[base + k * stride], 0.0);
                    }
                    self.cosine_fft.process_with_scratch(&mut buf, &mut scratch);
                    for k in 0..m {
                        f[base + k * stride] = buf[k].re;
                    }
                }
            }
        }
        let norm = (m as f64).powi(d as i32);
        let mut out = vec![0.0; self.len()];
        for (flat, x) in out.iter_mut().enumerate() {
            let mut j = [0usize; 3];
            let mut rest = flat;
            for i in (0..d).rev() {
                j[i] = rest % n + 1;
                rest /= n;
            }
            let mut acc = 0.0;
            for subset in 0..(1usize << d) {
                let mut w = 0usize;
                for (i, &ji) in j.iter().enumerate().take(d) {
                    w = w * m + if subset >> i & 1 == 1 { ji } else { 0 };
                }
                let sign = if subset.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * f[w];
            }
            *x = acc / norm;
        }
        out
    }
}
