//! Finite Birman–Schwinger matrices and negative-eigenvalue counting.
//!
//! For a potential `V = Σ V_n δ_{v_n}` the form `b_V[f] = Σ V_n |f(v_n)|²`
//! relative to the energy `a[f]` has nonzero spectrum equal to that of
//! `K_mn = √(V_m V_n) h_{v_m}(v_n)`, because `f(v) = a[f, h_v]`. Writing
//! `K = S M S` with `S = diag(√V_n μ_n)` and `M` the Gram matrix of the
//! normalized Green functions gives the two-sided bound
//! `λ_min(M) w_n ≤ λ_n(K) ≤ λ_max(M) w_n` with `w_n = V_n μ_n²` sorted.
//! The number of negative eigenvalues of `-Δ - αV` equals `#{n : λ_n(K) > 1/α}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::green::{BoxGreen, GreenSource, GreenTable};
use crate::lattice::{Lattice, Point};
use crate::linalg::{pencil_top_eigenvalues, symmetric_eigen_desc, InertiaCounter, SkylineMatrix};

/// Relative distance of `α` to a counting threshold `1/λ_n` below which `α` is skipped.
pub const THRESHOLD_GUARD: f64 = 1e-8;

/// Largest ratio deviation tolerated by the moderately varying flag.
pub const MODERATE_VARIATION: f64 = 0.25;

/// Sites with strengths, ordered by nonincreasing effective weight `w_n = V_n μ_n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePotential<V> {
    pub sites: Vec<V>,
    pub strengths: Vec<f64>,
    pub capacities: Vec<f64>,
    pub weights: Vec<f64>,
}

impl<V: Copy + Ord + std::fmt::Debug> SparsePotential<V> {
    /// Potential with values `V_n` at `sites`; capacities come from `table`.
    pub fn new<S: GreenSource<Vertex = V>>(table: &GreenTable<S>, sites: &[V], strengths: &[f64]) -> Result<Self> {
        if sites.len() != strengths.len() {
            return Err(Error::DimensionMismatch { expected: sites.len(), got: strengths.len() });
        }
        let mut seen = sites.to_vec();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate support vertex".into()));
        }
        if let Some(v) = strengths.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("potential value {v} must be positive")));
        }
        let caps: Vec<f64> = sites.iter().map(|&s| table.capacity(s)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by(|&a, &b| {
            let (wa, wb) = (strengths[a] * caps[a], strengths[b] * caps[b]);
            wb.total_cmp(&wa).then(sites[a].cmp(&sites[b]))
        });
        Ok(Self {
            sites: order.iter().map(|&i| sites[i]).collect(),
            strengths: order.iter().map(|&i| strengths[i]).collect(),
            capacities: order.iter().map(|&i| caps[i]).collect(),
            weights: order.iter().map(|&i| strengths[i] * caps[i]).collect(),
        })
    }

    /// Chooses `V_n = p_n / μ_n²` so that the effective weights are exactly `p_n`.
    pub fn for_target<S: GreenSource<Vertex = V>>(table: &GreenTable<S>, sites: &[V], targets: &[f64]) -> Result<Self> {
        if sites.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: sites.len(), got: targets.len() });
        }
        let strengths: Vec<f64> =
            sites.iter().zip(targets).map(|(&s, &p)| Ok(p / table.capacity(s)?)).collect::<Result<_>>()?;
        Self::new(table, sites, &strengths)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Largest `|w_{n+1}/w_n - 1|` over the second half of the sequence.
    pub fn variation(&self) -> f64 {
        let n = self.weights.len();
        (n / 2..n.saturating_sub(1)).map(|i| (self.weights[i + 1] / self.weights[i] - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn moderately_varying(&self) -> bool {
        self.weights.len() >= 2 && self.variation() < MODERATE_VARIATION
    }
}

/// `n^{-s}` for `n = 1..=count`.
pub fn power_schedule(count: usize, exponent: f64) -> Vec<f64> {
    (1..=count).map(|n| (n as f64).powf(-exponent)).collect()
}

/// Dense Birman–Schwinger matrix in the order of the potential's sites.
#[derive(Debug, Clone, PartialEq)]
pub struct BsMatrix {
    pub matrix: DMatrix<f64>,
    pub box_radius: Option<i64>,
    pub c_norm: f64,
}

/// Tolerance for the positive semidefiniteness check, relative to `max(1, ‖K‖)`.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `K_mn = √(V_m V_n) h_{v_m}(v_n)`.
pub fn bs_matrix<S: GreenSource>(table: &GreenTable<S>, potential: &SparsePotential<S::Vertex>) -> Result<BsMatrix> {
    let n = potential.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = potential.strengths[i] * potential.capacities[i];
        for j in i + 1..n {
            let h = table.value(potential.sites[i], potential.sites[j])?;
            let v = (potential.strengths[i] * potential.strengths[j]).sqrt() * h;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    if n > 0 {
        let min = symmetric_eigen_desc(&k).0[n - 1];
        let scale = k.norm().max(1.0);
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::InvalidArgument(format!("Birman–Schwinger matrix has eigenvalue {min:e}")));
        }
    }
    let meta = table.metadata();
    Ok(BsMatrix { matrix: k, box_radius: meta.box_radius, c_norm: meta.c_norm })
}

/// Eigenvalues (descending) and the worst eigenpair residual relative to `‖K‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub max_relative_residual: f64,
}

pub fn bs_spectrum(k: &DMatrix<f64>) -> Result<Spectrum> {
    if k.nrows() != k.ncols() {
        return Err(Error::DimensionMismatch { expected: k.nrows(), got: k.ncols() });
    }
    let (values, vectors) = symmetric_eigen_desc(k);
    let scale = k.norm().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (i, &l) in values.iter().enumerate() {
        let x: DVector<f64> = vectors.column(i).into_owned();
        let r = k * &x - &x * l;
        worst = worst.max(r.norm() / scale);
    }
    Ok(Spectrum { values, max_relative_residual: worst })
}

/// Outcome of the matrix-level two-sided bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SandwichReport {
    pub lambda_min_gram: f64,
    pub lambda_max_gram: f64,
    /// `λ_n / w_n` in order.
    pub ratios: Vec<f64>,
    /// Largest excursion of a ratio outside `[λ_min(M), λ_max(M)]`.
    pub max_slack: f64,
    pub holds: bool,
}

/// Allowed excursion of `λ_n / w_n` outside the Gram eigenvalue range.
pub const SANDWICH_TOLERANCE: f64 = 1e-10;

/// Checks `λ_min(M) w_n ≤ λ_n ≤ λ_max(M) w_n` for the sorted weights of `potential`.
pub fn two_sided_check<V>(
    lambdas: &[f64],
    potential: &SparsePotential<V>,
    gram: &DMatrix<f64>,
) -> Result<SandwichReport> {
    let n = lambdas.len();
    if potential.weights.len() != n || gram.nrows() != n || gram.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gram.nrows().max(potential.weights.len()) });
    }
    let eig = symmetric_eigen_desc(gram).0;
    let (lo, hi) = (eig[n - 1], eig[0]);
    let ratios: Vec<f64> = lambdas.iter().zip(&potential.weights).map(|(l, w)| l / w).collect();
    let max_slack = ratios.iter().map(|&r| (lo - r).max(r - hi).max(0.0)).fold(0.0, f64::max);
    Ok(SandwichReport {
        lambda_min_gram: lo,
        lambda_max_gram: hi,
        ratios,
        max_slack,
        holds: max_slack <= SANDWICH_TOLERANCE,
    })
}

/// `max |λ_n / w_n - 1|` over the middle half `N/4 ≤ n < 3N/4` (zero-based).
pub fn asymptotic_ratio<V>(lambdas: &[f64], potential: &SparsePotential<V>) -> Result<f64> {
    let n = lambdas.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("ratio test needs at least 8 eigenvalues, got {n}")));
    }
    if potential.weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: potential.weights.len() });
    }
    Ok((n / 4..3 * n / 4).map(|i| (lambdas[i] / potential.weights[i] - 1.0).abs()).fold(0.0, f64::max))
}

/// `N_-(-Δ - αV)` on the interior of `graph` for `V` given as `(vertex, value)` pairs.
pub fn count_negative(graph: &WeightedGraph, potential: &[(usize, f64)], alpha: f64) -> Result<usize> {
    let sites: Vec<usize> = potential.iter().map(|p| p.0).collect();
    let values: Vec<f64> = potential.iter().map(|p| p.1).collect();
    InertiaCounter::new(graph, &sites, &values)?.count(alpha)
}

/// `#{n : λ_n > 1/α}`.
pub fn count_above(lambdas: &[f64], alpha: f64) -> usize {
    lambdas.iter().filter(|&&l| alpha * l > 1.0).count()
}

/// Whether `α` sits within the guard band of some `1/λ_n`.
pub fn near_threshold(lambdas: &[f64], alpha: f64) -> bool {
    lambdas.iter().any(|&l| l > 0.0 && (alpha * l - 1.0).abs() <= THRESHOLD_GUARD)
}

/// One coupling of a Birman–Schwinger principle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountReport {
    pub alpha: f64,
    /// Inertia count on the same boxed graph as `K`.
    pub n_minus: usize,
    pub n_bs: usize,
    /// With an origin clamp: inertia count on the box without the clamp.
    pub n_minus_unclamped: Option<usize>,
    pub agreement: bool,
    pub skipped: bool,
    pub warnings: Vec<String>,
}

/// Dual counting on a lattice box: inertia of `-Δ - αV` against the eigenvalues of `K`.
///
/// Without an origin clamp the counts must agree exactly. With the clamp,
/// the count on the unclamped box must lie in `{n_bs, n_bs + 1}`.
pub fn bs_principle_check(
    table: &GreenTable<BoxGreen>,
    potential: &SparsePotential<Point>,
    alphas: &[f64],
) -> Result<Vec<CountReport>> {
    let k = bs_matrix(table, potential)?;
    let lambdas = bs_spectrum(&k.matrix)?.values;
    let lattice = table.source().lattice();
    let ids = site_ids(lattice, &potential.sites)?;
    let counter = InertiaCounter::new(lattice.graph(), &ids, &potential.strengths)?;
    let unclamped = if lattice.spec().clamps_origin() {
        let open = Lattice::build(lattice.spec().unclamped())?;
        Some(InertiaCounter::new(open.graph(), &site_ids(&open, &potential.sites)?, &potential.strengths)?)
    } else {
        None
    };
    let mut reports = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let n_bs = count_above(&lambdas, alpha);
        let mut report = CountReport {
            alpha,
            n_minus: 0,
            n_bs,
            n_minus_unclamped: None,
            agreement: false,
            skipped: false,
            warnings: vec![],
        };
        if near_threshold(&lambdas, alpha) {
            report.skipped = true;
            report.warnings.push("alpha within threshold guard of 1/lambda_n".into());
            reports.push(report);
            continue;
        }
        match counter.count(alpha) {
            Ok(c) => report.n_minus = c,
            Err(e @ Error::ThresholdProximity { .. }) => {
                report.skipped = true;
                report.warnings.push(e.to_string());
                reports.push(report);
                continue;
            }
            Err(e) => return Err(e),
        }
        report.agreement = report.n_minus == n_bs;
        if let Some(open) = &unclamped {
            match open.count(alpha) {
                Ok(c) => {
                    report.n_minus_unclamped = Some(c);
                    report.agreement &= c == n_bs || c == n_bs + 1;
                }
                Err(e @ Error::ThresholdProximity { .. }) => {
                    report.skipped = true;
                    report.warnings.push(format!("unclamped box: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

fn site_ids(lattice: &Lattice, sites: &[Point]) -> Result<Vec<usize>> {
    sites
        .iter()
        .map(|p| lattice.index(p).ok_or_else(|| Error::InvalidArgument(format!("site {p:?} outside the box"))))
        .collect()
}

/// Interior vertex count up to which [`pencil_oracle`] works with the full dense pencil.
pub const DENSE_PENCIL_LIMIT: usize = 3000;

/// Nonzero spectrum of the pencil `b_V[f] = λ a[f]` over all interior vertices.
///
/// Small graphs use the full dense pencil. Larger ones first eliminate the
/// potential-free vertices exactly with a profile Cholesky factorization, which
/// leaves the pencil `(V, S)` on the sites with `S` the Schur complement.
pub fn pencil_oracle(graph: &WeightedGraph, potential: &[(usize, f64)]) -> Result<Vec<f64>> {
    let order: Vec<usize> = graph.interior_vertices().collect();
    if order.len() > DENSE_PENCIL_LIMIT {
        return reduced_pencil(graph, potential);
    }
    let a = SkylineMatrix::from_graph(graph, &order, |_| 0.0)?.to_dense();
    let mut b = DMatrix::zeros(order.len(), order.len());
    for &(v, value) in potential {
        let i = order.binary_search(&v).map_err(|_| Error::InvalidArgument(format!("site {v} is not interior")))?;
        b[(i, i)] = value;
    }
    let mut vals = pencil_top_eigenvalues(&a, &b)?;
    vals.truncate(potential.len());
    Ok(vals)
}

fn reduced_pencil(graph: &WeightedGraph, potential: &[(usize, f64)]) -> Result<Vec<f64>> {
    let (sites, values): (Vec<usize>, Vec<f64>) = potential.iter().copied().unzip();
    let counter = InertiaCounter::new(graph, &sites, &values)?;
    pencil_top_eigenvalues(counter.schur_complement(), &DMatrix::from_diagonal(&DVector::from_vec(values)))
}

/// One row of the semiclassical comparison `N_-(α) / α^{d/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeylRow {
    pub alpha: f64,
    pub n_minus: usize,
    pub ratio: f64,
}

/// `N_-(-Δ - αV) / α^{d/2}` over a sweep on a lattice box.
pub fn weyl_demo(lattice: &Lattice, potential: &[(Point, f64)], alphas: &[f64]) -> Result<Vec<WeylRow>> {
    let d = lattice.dimension() as f64;
    let positive: Vec<(Point, f64)> = potential.iter().copied().filter(|p| p.1 > 0.0).collect();
    let sites = site_ids(lattice, &positive.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let values: Vec<f64> = positive.iter().map(|p| p.1).collect();
    let counter = InertiaCounter::new(lattice.graph(), &sites, &values)?;
    alphas
        .iter()
        .map(|&alpha| {
            let n = counter.count(alpha)?;
            Ok(WeylRow { alpha, n_minus: n, ratio: n as f64 / alpha.powf(d / 2.0) })
        })
        .collect()
}

/// `count` log-spaced couplings on `[lo, hi]`.
pub fn log_sweep(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    crate::heat::log_grid(lo, hi, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BoundaryMode, LatticeSpec};
    use std::sync::Arc;

    fn cubic_table(r: i64) -> GreenTable<BoxGreen> {
        GreenTable::new(Arc::new(BoxGreen::new(LatticeSpec::new(3, r, BoundaryMode::DirichletBox)).unwrap()))
    }

    #[test]
    fn spectrum_examples() {
        let s = bs_spectrum(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(s.values, vec![3.0, 1.0]);
        let s = bs_spectrum(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((s.values[0] - 3.0).abs() < 1e-14 && (s.values[1] - 1.0).abs() < 1e-14);
        assert!(s.max_relative_residual < 1e-14);
    }

    #[test]
    fn single_site_matrix() {
        let t = cubic_table(6);
        let p = SparsePotential::new(&t, &[[1, 0, 0]], &[2.0]).unwrap();
        let k = bs_matrix(&t, &p).unwrap();
        assert!((k.matrix[(0, 0)] - 2.0 * t.capacity([1, 0, 0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn potential_orders_by_weight_then_vertex() {
        let t = cubic_table(6);
        let sites = [[2, 0, 0], [0, 0, 0], [-2, 0, 0]];
        let p = SparsePotential::new(&t, &sites, &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.sites[0], [-2, 0, 0]);
        assert!(p.weights.windows(2).all(|w| w[0] >= w[1]));
        let q = SparsePotential::for_target(&t, &sites, &[0.5, 0.5, 0.5]).unwrap();
        // equal targets tie; lexicographic order breaks it
        assert_eq!(q.sites, vec![[-2, 0, 0], [0, 0, 0], [2, 0, 0]]);
        assert!(SparsePotential::new(&t, &[[0, 0, 0], [0, 0, 0]], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_gram_gives_exact_weights() {
        let p = SparsePotential {
            sites: vec![0, 1],
            strengths: vec![2.0, 1.0],
            capacities: vec![1.0, 1.0],
            weights: vec![2.0, 1.0],
        };
        let r = two_sided_check(&[2.0, 1.0], &p, &DMatrix::identity(2, 2)).unwrap();
        assert!(r.holds && r.max_slack == 0.0);
        let bad = two_sided_check(&[2.5, 1.0], &p, &DMatrix::identity(2, 2)).unwrap();
        assert!(!bad.holds);
    }

    #[test]
    fn ratio_needs_eight_points() {
        let p = SparsePotential {
            sites: vec![0; 4],
            strengths: vec![1.0; 4],
            capacities: vec![1.0; 4],
            weights: vec![1.0; 4],
        };
        assert!(asymptotic_ratio(&[1.0; 4], &p).is_err());
    }

    #[test]
    fn single_site_threshold_is_inverse_capacity() {
        let spec = LatticeSpec::new(3, 5, BoundaryMode::DirichletBox);
        let t = GreenTable::new(Arc::new(BoxGreen::new(spec).unwrap()));
        let l = Lattice::build(spec).unwrap();
        let o = l.origin();
        let threshold = 1.0 / t.capacity([0, 0, 0]).unwrap();
        assert_eq!(count_negative(l.graph(), &[(o, 1.0)], 0.0).unwrap(), 0);
        assert_eq!(count_negative(l.graph(), &[(o, 1.0)], threshold * (1.0 - 1e-6)).unwrap(), 0);
        assert_eq!(count_negative(l.graph(), &[(o, 1.0)], threshold * (1.0 + 1e-6)).unwrap(), 1);
    }

    #[test]
    fn matrix_spectrum_matches_pencil() {
        let spec = LatticeSpec::new(2, 5, BoundaryMode::DirichletBoxPlusOrigin);
        let t = GreenTable::new(Arc::new(BoxGreen::new(spec).unwrap()));
        let sites = [[1, 0, 0], [-3, 2, 0], [2, -4, 0]];
        let p = SparsePotential::new(&t, &sites, &[1.0, 2.0, 0.5]).unwrap();
        let k = bs_spectrum(&bs_matrix(&t, &p).unwrap().matrix).unwrap().values;
        let l = t.source().lattice();
        let pot: Vec<(usize, f64)> = p.sites.iter().zip(&p.strengths).map(|(s, &v)| (l.index(s).unwrap(), v)).collect();
        let oracle = pencil_oracle(l.graph(), &pot).unwrap();
        for (a, b) in k.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let reduced = reduced_pencil(l.graph(), &pot).unwrap();
        for (a, b) in reduced.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn weyl_single_site_ratio_decays() {
        let l = Lattice::build(LatticeSpec::new(3, 4, BoundaryMode::DirichletBox)).unwrap();
        let rows = weyl_demo(&l, &[([0, 0, 0], 1.0)], &[10.0, 100.0, 1000.0]).unwrap();
        assert!(rows.iter().all(|r| r.n_minus == 1));
        assert!(rows.windows(2).all(|w| w[1].ratio < w[0].ratio));
        let zero = weyl_demo(&l, &[], &[10.0]).unwrap();
        assert_eq!(zero[0].n_minus, 0);
    }
}
