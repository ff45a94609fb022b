//! Greedy construction of sparse vertex sets.
//!
//! Vertices `v_1, v_2, …` are taken from a candidate stream; a candidate is
//! accepted as `v_n` once `|(h̃_{v_k}, h̃_{v_n})| < ε_{kn}` for every earlier
//! `k`. The Gram matrix `M` of the normalized Green functions then satisfies
//! `‖M - I‖_HS ≤ √(Σ_{m≠n} ε_{mn}²)`, and `‖M - I‖_HS < 1` certifies that
//! the normalized Green functions are close to an orthonormal system.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{GreenSource, GreenTable, Z2Green, EULER_GAMMA};
use crate::lattice::{Lattice, Point};
use crate::linalg::symmetric_eigen_desc;

/// Default number of candidates examined before a build gives up.
pub const DEFAULT_SCAN_CAP: usize = 1_000_000;

/// Tolerance on `|M_mn - M_nm|`.
pub const GRAM_SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Geometric schedule `ε_mn = β 2^{-(m+n)/2}` (indices from one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpsilonBudget {
    pub size: usize,
    pub cap: f64,
    pub beta: f64,
}

/// Budget over `size` vertices whose off-diagonal square sum is `cap / 4`.
pub fn default_budget(size: usize, cap: f64) -> Result<EpsilonBudget> {
    if size == 0 || !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidArgument(format!("budget needs N >= 1 and cap > 0 (got N={size}, cap={cap})")));
    }
    let unit = pair_sum(size);
    let beta = if unit > 0.0 { (cap / (4.0 * unit)).sqrt() } else { 0.0 };
    Ok(EpsilonBudget { size, cap, beta })
}

/// `Σ_{m≠n ≤ N} 2^{-(m+n)}`.
fn pair_sum(size: usize) -> f64 {
    let s1 = 1.0 - 0.5f64.powi(size as i32);
    let s2 = (1.0 - 0.25f64.powi(size as i32)) / 3.0;
    s1 * s1 - s2
}

impl EpsilonBudget {
    pub fn epsilon(&self, m: usize, n: usize) -> f64 {
        debug_assert!(m >= 1 && n >= 1 && m != n);
        self.beta * 0.5f64.powf((m + n) as f64 / 2.0)
    }

    /// `Σ_{m≠n} ε_mn²`.
    pub fn square_sum(&self) -> f64 {
        self.beta * self.beta * pair_sum(self.size)
    }

    /// Upper bound on `‖M - I‖_HS` implied by the schedule.
    pub fn hs_bound(&self) -> f64 {
        self.square_sum().sqrt()
    }
}

/// Ordered source of candidate vertices.
pub trait CandidateStream {
    type Vertex;

    /// Next candidate given the accepted vertices and the thresholds `ε_kn` they impose.
    fn next_candidate(&mut self, accepted: &[Self::Vertex], epsilons: &[f64]) -> Result<Option<Self::Vertex>>;

    /// Candidates emitted so far.
    fn scanned(&self) -> usize;
}

/// Candidates from a fixed list.
#[derive(Debug, Clone)]
pub struct ListStream<V> {
    items: Vec<V>,
    pos: usize,
}

impl<V: Copy> ListStream<V> {
    pub fn new(items: Vec<V>) -> Self {
        Self { items, pos: 0 }
    }
}

impl<V: Copy> CandidateStream for ListStream<V> {
    type Vertex = V;

    fn next_candidate(&mut self, _accepted: &[V], _epsilons: &[f64]) -> Result<Option<V>> {
        let item = self.items.get(self.pos).copied();
        self.pos += 1;
        Ok(item)
    }

    fn scanned(&self) -> usize {
        self.pos.min(self.items.len())
    }
}

/// Interior points of a lattice box whose mildness is at most `mildness_cap`,
/// by increasing radius with lexicographic tie-break.
pub fn lattice_candidates(lattice: &Lattice, mildness_cap: f64) -> Vec<Point> {
    lattice.candidates_by_radius(mildness_cap).into_iter().map(|v| lattice.coords(v)).collect()
}

/// `log r` at which the far-field inner product with a vertex of kernel value `a_x`
/// drops to `eps`: solves `½ √(a_x / A(r)) = eps` with the asymptotic `A`.
pub fn predicted_log_radius(a_x: f64, eps: f64) -> f64 {
    let needed = a_x / (4.0 * eps * eps);
    let kappa = (8f64.ln() + 2.0 * EULER_GAMMA) / std::f64::consts::PI;
    0.5 * std::f64::consts::PI * (needed - kappa)
}

/// Outward spiral over `ℤ² \ {0}`: annuli `r ≤ |y| < r + 1`, counterclockwise from
/// the positive first axis within each squared radius. When a new index starts,
/// the scan jumps to the radius where the far-field prediction meets the thresholds.
#[derive(Debug)]
pub struct Z2CandidateStream {
    green: Arc<Z2Green>,
    scan_cap: usize,
    scanned: usize,
    radius: i64,
    ring: VecDeque<[i64; 2]>,
    jumped_for: usize,
}

impl Z2CandidateStream {
    pub fn new(green: Arc<Z2Green>, scan_cap: usize) -> Self {
        Self { green, scan_cap, scanned: 0, radius: 0, ring: VecDeque::new(), jumped_for: 0 }
    }

    /// Current inner radius of the annulus being emitted.
    pub fn radius(&self) -> i64 {
        self.radius
    }

    fn fill_ring(&mut self) -> Result<()> {
        while self.ring.is_empty() {
            let r = self.radius;
            if r >= crate::green::z2::MAX_COORDINATE / 2 {
                return Err(Error::InvalidArgument("spiral reached the coordinate cap".into()));
            }
            let expected = 2.0 * std::f64::consts::PI * (r as f64 + 0.5);
            if expected > 4.0 * self.scan_cap as f64 {
                return Err(Error::InvalidArgument(format!(
                    "annulus at radius {r} holds about {expected:.0} points, beyond the scan horizon"
                )));
            }
            let (lo, hi) = ((r as i128).pow(2), (r as i128 + 1).pow(2));
            let mut pts = Vec::new();
            for i in -(r + 1)..=(r + 1) {
                let i2 = (i as i128).pow(2);
                // smallest j ≥ 0 with i² + j² ≥ r², largest with i² + j² < (r+1)²
                let j_lo = ceil_sqrt((lo - i2).max(0));
                if hi - i2 <= 0 {
                    continue;
                }
                let j_hi = ceil_sqrt(hi - i2) - 1;
                for j in j_lo..=j_hi {
                    let j = j as i64;
                    if i == 0 && j == 0 {
                        continue;
                    }
                    pts.push([i, j]);
                    if j > 0 {
                        pts.push([i, -j]);
                    }
                }
            }
            pts.sort_by(|a, b| spiral_cmp(*a, *b));
            self.ring = pts.into();
            self.radius += 1;
        }
        Ok(())
    }
}

/// Smallest `k ≥ 0` with `k² ≥ v`.
fn ceil_sqrt(v: i128) -> i128 {
    if v <= 0 {
        return 0;
    }
    let mut k = (v as f64).sqrt() as i128;
    while k * k < v {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= v {
        k -= 1;
    }
    k
}

fn spiral_cmp(a: [i64; 2], b: [i64; 2]) -> std::cmp::Ordering {
    let norm = |p: [i64; 2]| (p[0] as i128).pow(2) + (p[1] as i128).pow(2);
    let half = |p: [i64; 2]| {
        if p[1] > 0 || (p[1] == 0 && p[0] > 0) {
            0
        } else {
            1
        }
    };
    norm(a).cmp(&norm(b)).then(half(a).cmp(&half(b))).then_with(|| {
        let cross = (a[0] as i128) * (b[1] as i128) - (a[1] as i128) * (b[0] as i128);
        0.cmp(&cross)
    })
}

impl CandidateStream for Z2CandidateStream {
    type Vertex = Point;

    fn next_candidate(&mut self, accepted: &[Point], epsilons: &[f64]) -> Result<Option<Point>> {
        if self.scanned >= self.scan_cap {
            return Err(Error::InvalidArgument(format!("scan horizon of {} candidates exhausted", self.scan_cap)));
        }
        if !accepted.is_empty() && self.jumped_for != accepted.len() {
            self.jumped_for = accepted.len();
            let mut log_r = f64::NEG_INFINITY;
            for (x, &eps) in accepted.iter().zip(epsilons) {
                let a_x = self.green.kernel().value([x[0], x[1]])?;
                log_r = log_r.max(predicted_log_radius(a_x, eps));
            }
            let cap = ((crate::green::z2::MAX_COORDINATE / 2) as f64).ln();
            if log_r > cap {
                return Err(Error::InvalidArgument(format!(
                    "far-field prediction puts the next vertex at radius e^{log_r:.1}, beyond the coordinate cap 2^51"
                )));
            }
            let target = log_r.exp().floor() as i64;
            if target > self.radius {
                self.radius = target;
                self.ring.clear();
            }
        }
        self.fill_ring()?;
        let p = self.ring.pop_front().expect("ring was filled");
        self.scanned += 1;
        Ok(Some([p[0], p[1], 0]))
    }

    fn scanned(&self) -> usize {
        self.scanned
    }
}

/// A certified sparse set with its Gram data.
#[derive(Debug, Clone)]
pub struct SparseSet<V> {
    pub vertices: Vec<V>,
    pub capacities: Vec<f64>,
    pub gram: DMatrix<f64>,
    pub delta_hs: f64,
    /// Operator norm of `M - I`.
    pub delta_op: f64,
    pub budget: EpsilonBudget,
    /// Largest mildness among the accepted vertices.
    pub mildness_bound: f64,
    pub box_radius: Option<i64>,
    pub c_norm: f64,
    pub scanned: usize,
}

impl<V: Copy> SparseSet<V> {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `δ_HS < 1` and `δ_HS ≤ √(Σε²)`.
    pub fn certificate_holds(&self) -> bool {
        self.delta_hs < 1.0 && self.delta_hs <= self.budget.hs_bound() * (1.0 + 1e-12)
    }

    pub fn to_document(&self, coords: impl Fn(V) -> Vec<i64>) -> SparseSetDocument {
        SparseSetDocument {
            vertices: self.vertices.iter().map(|&v| coords(v)).collect(),
            capacities: self.capacities.clone(),
            gram: (0..self.gram.nrows()).map(|i| self.gram.row(i).iter().copied().collect()).collect(),
            delta_hs: self.delta_hs,
            delta_op: self.delta_op,
            budget: self.budget,
            hs_bound: self.budget.hs_bound(),
            mildness_bound: self.mildness_bound,
            box_radius: self.box_radius,
            c_norm: self.c_norm,
            scanned: self.scanned,
        }
    }
}

/// JSON form of a [`SparseSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SparseSetDocument {
    pub vertices: Vec<Vec<i64>>,
    pub capacities: Vec<f64>,
    pub gram: Vec<Vec<f64>>,
    pub delta_hs: f64,
    pub delta_op: f64,
    pub budget: EpsilonBudget,
    pub hs_bound: f64,
    pub mildness_bound: f64,
    pub box_radius: Option<i64>,
    pub c_norm: f64,
    pub scanned: usize,
}

/// `M_mn = h_{v_m}(v_n) / (μ_m μ_n)`.
pub fn gram_matrix<S: GreenSource>(table: &GreenTable<S>, vertices: &[S::Vertex]) -> Result<DMatrix<f64>> {
    let n = vertices.len();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let a = table.normalized_inner(vertices[i], vertices[j])?;
            let b = table.normalized_inner(vertices[j], vertices[i])?;
            if (a - b).abs() > GRAM_SYMMETRY_TOLERANCE {
                return Err(Error::InvalidArgument(format!("Gram entries ({i}, {j}) disagree by {:e}", (a - b).abs())));
            }
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
    Ok(m)
}

/// Frobenius norm of `M - I`.
pub fn hs_deviation(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let n = m.nrows();
    Ok((m - DMatrix::<f64>::identity(n, n)).norm())
}

/// Spectral norm of `M - I` for symmetric `M`.
pub fn op_deviation(m: &DMatrix<f64>) -> f64 {
    let eig = symmetric_eigen_desc(m).0;
    eig.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max)
}

/// Result of a build that may have stopped early.
#[derive(Debug, Clone)]
pub struct BuildOutcome<V> {
    /// Accepted prefix (all `N` vertices on success).
    pub set: SparseSet<V>,
    pub failure: Option<Error>,
}

/// Greedy construction; fails with [`Error::SparseSetIncomplete`] if fewer than
/// `size` vertices can be accepted.
pub fn build_sparse_set<S, C>(
    table: &GreenTable<S>,
    budget: &EpsilonBudget,
    size: usize,
    stream: &mut C,
) -> Result<SparseSet<S::Vertex>>
where
    S: GreenSource,
    C: CandidateStream<Vertex = S::Vertex>,
{
    let outcome = build_sparse_set_partial(table, budget, size, stream)?;
    match outcome.failure {
        None => Ok(outcome.set),
        Some(e) => Err(e),
    }
}

/// Like [`build_sparse_set`] but returns the accepted prefix alongside the failure.
pub fn build_sparse_set_partial<S, C>(
    table: &GreenTable<S>,
    budget: &EpsilonBudget,
    size: usize,
    stream: &mut C,
) -> Result<BuildOutcome<S::Vertex>>
where
    S: GreenSource,
    C: CandidateStream<Vertex = S::Vertex>,
{
    if size == 0 || size > budget.size {
        return Err(Error::InvalidArgument(format!("cannot build {size} vertices from a budget of {}", budget.size)));
    }
    let mut accepted: Vec<S::Vertex> = Vec::with_capacity(size);
    let mut caps: Vec<f64> = Vec::with_capacity(size);
    let mut failure = None;
    'outer: for n in 1..=size {
        let eps: Vec<f64> = (1..n).map(|k| budget.epsilon(k, n)).collect();
        loop {
            let cand = match stream.next_candidate(&accepted, &eps) {
                Ok(Some(c)) => c,
                Ok(None) => {
                    failure = Some(incomplete(size, n - 1, stream.scanned(), "candidate stream exhausted".into()));
                    break 'outer;
                }
                Err(e) => {
                    failure = Some(incomplete(size, n - 1, stream.scanned(), e.to_string()));
                    break 'outer;
                }
            };
            if accepted.contains(&cand) {
                continue;
            }
            let cap_c = table.source().capacity(cand)?;
            if cap_c <= 0.0 {
                continue;
            }
            let mut ok = true;
            for (k, &x) in accepted.iter().enumerate() {
                let inner = table.source().green(x, cand)? / (caps[k] * cap_c).sqrt();
                if inner.abs() >= eps[k] {
                    ok = false;
                    break;
                }
            }
            if ok {
                accepted.push(cand);
                caps.push(table.capacity(cand)?);
                break;
            }
        }
    }
    let set = finish(table, budget, accepted, caps, stream.scanned())?;
    Ok(BuildOutcome { set, failure })
}

fn incomplete(requested: usize, accepted: usize, scanned: usize, reason: String) -> Error {
    Error::SparseSetIncomplete { requested, accepted, scanned, reason }
}

fn finish<S: GreenSource>(
    table: &GreenTable<S>,
    budget: &EpsilonBudget,
    vertices: Vec<S::Vertex>,
    capacities: Vec<f64>,
    scanned: usize,
) -> Result<SparseSet<S::Vertex>> {
    let gram = gram_matrix(table, &vertices)?;
    let delta_hs = hs_deviation(&gram)?;
    let delta_op = op_deviation(&gram);
    let mildness_bound = vertices.iter().map(|&v| table.source().mildness(v)).fold(0.0, f64::max);
    let meta = table.metadata();
    Ok(SparseSet {
        vertices,
        capacities,
        gram,
        delta_hs,
        delta_op,
        budget: *budget,
        mildness_bound,
        box_radius: meta.box_radius,
        c_norm: meta.c_norm,
        scanned,
    })
}
