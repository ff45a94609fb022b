//! Profile (skyline) storage and unpivoted `LDLᵀ` for graph operators.
//!
//! Row `i` stores the lower-triangle entries from its first nonzero column
//! up to the diagonal. With lexicographic vertex order the profile of a box
//! Laplacian is its band. [`InertiaCounter`] moves the potential support to
//! the end of the elimination order: the leading block (the Laplacian with
//! the support removed) is factored once, and each coupling `α` only needs
//! the inertia of the small trailing Schur complement `S₀ - α diag(V)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::dense::dense_ldlt_inertia;

/// Pivots with magnitude at most this fraction of the matrix scale count as zero.
pub const ZERO_BAND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineMatrix {
    /// Matrix of `-Δ + diag(shift)` on the interior vertices, rows in the given order.
    ///
    /// `order` must list every interior vertex exactly once.
    pub fn from_graph(graph: &WeightedGraph, order: &[usize], shift: impl Fn(usize) -> f64) -> Result<Self> {
        let nv = graph.vertex_count();
        let mut pos = vec![usize::MAX; nv];
        for (i, &v) in order.iter().enumerate() {
            if v >= nv || graph.is_dirichlet(v) || pos[v] != usize::MAX {
                return Err(Error::InvalidArgument(format!("vertex {v} cannot appear in the elimination order")));
            }
            pos[v] = i;
        }
        let interior = graph.interior_vertices().count();
        if order.len() != interior {
            return Err(Error::DimensionMismatch { expected: interior, got: order.len() });
        }
        let n = order.len();
        let mut first = vec![0usize; n];
        let mut offset = vec![0usize; n + 1];
        for (i, &v) in order.iter().enumerate() {
            first[i] = graph.neighbors(v).iter().map(|&(w, _)| pos[w]).filter(|&p| p < i).min().unwrap_or(i);
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for (i, &v) in order.iter().enumerate() {
            values[offset[i] + i - first[i]] = graph.mildness(v) + shift(v);
            for &(w, g) in graph.neighbors(v) {
                let j = pos[w];
                if j < i {
                    values[offset[i] + j - first[i]] = -g;
                }
            }
        }
        Ok(Self { n, first, offset, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of stored entries.
    pub fn profile_size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.first[i] {
            0.0
        } else {
            self.values[self.offset[i] + j - self.first[i]]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE)
    }

    /// Factors the leading `lead` rows and returns the pivots of that block together
    /// with the dense Schur complement of the trailing rows.
    fn factor_partial(mut self, lead: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.n;
        let scale = self.scale();
        let mut d = vec![0.0; lead];
        for i in 0..n {
            let fi = self.first[i];
            let jmax = i.min(lead);
            let (head, tail) = self.values.split_at_mut(self.offset[i]);
            let row_i = &mut tail[..i - fi + 1];
            // Row i holds t_ij = l_ij d_j for j < jmax once this loop is done.
            for j in fi..jmax {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                if k0 < j {
                    let row_j = &head[self.offset[j]..self.offset[j + 1]];
                    let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                    row_i[j - fi] -= s;
                }
            }
            let mut diag_update = 0.0;
            for j in fi..jmax {
                let t = row_i[j - fi];
                let l = t / d[j];
                diag_update += t * l;
                row_i[j - fi] = l;
            }
            if i < lead {
                let di = row_i[i - fi] - diag_update;
                if di.abs() <= ZERO_BAND * scale {
                    return Err(Error::ThresholdProximity { index: i, value: di });
                }
                d[i] = di;
                row_i[i - fi] = di;
            }
        }

        let b = n - lead;
        let mut schur = DMatrix::zeros(b, b);
        for a in 0..b {
            let i = lead + a;
            for c in 0..=a {
                let k = lead + c;
                let mut s = self.get(i, k);
                let lo = self.first[i].max(self.first[k]);
                for j in lo..lead {
                    s -= self.values[self.offset[i] + j - self.first[i]]
                        * d[j]
                        * self.values[self.offset[k] + j - self.first[k]];
                }
                schur[(a, c)] = s;
                schur[(c, a)] = s;
            }
        }
        Ok((d, schur))
    }

    /// Number of negative pivots of the full unpivoted factorization.
    pub fn negative_pivots(self) -> Result<usize> {
        let n = self.n;
        let (d, _) = self.factor_partial(n)?;
        Ok(d.iter().filter(|&&x| x < 0.0).count())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Counts negative eigenvalues of `-Δ - α diag(V)` for many `α` with one factorization.
#[derive(Debug, Clone)]
pub struct InertiaCounter {
    sites: Vec<usize>,
    weights: Vec<f64>,
    schur: DMatrix<f64>,
    lead: usize,
}

impl InertiaCounter {
    /// `sites` carry the potential values `weights`; all must be interior and distinct.
    pub fn new(graph: &WeightedGraph, sites: &[usize], weights: &[f64]) -> Result<Self> {
        if sites.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: sites.len(), got: weights.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("potential value {w} is not a finite nonnegative number")));
        }
        if !graph.has_dirichlet() {
            return Err(Error::Singular("counting needs a Dirichlet set".into()));
        }
        let mut is_site = vec![false; graph.vertex_count()];
        for &s in sites {
            if s >= is_site.len() || graph.is_dirichlet(s) || is_site[s] {
                return Err(Error::InvalidArgument(format!("site {s} is not a distinct interior vertex")));
            }
            is_site[s] = true;
        }
        let mut order: Vec<usize> = graph.interior_vertices().filter(|&v| !is_site[v]).collect();
        let lead = order.len();
        order.extend_from_slice(sites);
        let matrix = SkylineMatrix::from_graph(graph, &order, |_| 0.0)?;
        let (_, schur) = matrix.factor_partial(lead)?;
        Ok(Self { sites: sites.to_vec(), weights: weights.to_vec(), schur, lead })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Schur complement of the Laplacian onto the sites: the inverse of the Green matrix there.
    pub fn schur_complement(&self) -> &DMatrix<f64> {
        &self.schur
    }

    /// Size of the leading (potential-free) block, all of whose pivots are positive.
    pub fn leading_size(&self) -> usize {
        self.lead
    }

    /// `N_-(-Δ - αV)` on the interior of the graph.
    pub fn count(&self, alpha: f64) -> Result<usize> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("coupling {alpha} must be finite and nonnegative")));
        }
        if self.sites.is_empty() {
            return Ok(0);
        }
        let mut s = self.schur.clone();
        for (k, w) in self.weights.iter().enumerate() {
            s[(k, k)] -= alpha * w;
        }
        Ok(dense_ldlt_inertia(&s, ZERO_BAND)?.negative)
    }
}
