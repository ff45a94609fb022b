//! Small dense symmetric problems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues sorted descending with matching eigenvector columns.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Signs of the pivots of a symmetric factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub positive: usize,
}

/// Inertia from an unpivoted `LDLᵀ` factorization.
///
/// A pivot with `|d| ≤ zero_band · max|m_ij|` aborts with
/// [`Error::ThresholdProximity`] instead of being assigned a sign.
pub fn dense_ldlt_inertia(m: &DMatrix<f64>, zero_band: f64) -> Result<Inertia> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut l = m.clone();
    let mut d = vec![0.0; n];
    let mut inertia = Inertia::default();
    for j in 0..n {
        let mut dj = l[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        if dj.abs() <= zero_band * scale {
            return Err(Error::ThresholdProximity { index: j, value: dj });
        }
        d[j] = dj;
        if dj < 0.0 {
            inertia.negative += 1;
        } else {
            inertia.positive += 1;
        }
        for i in j + 1..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(inertia)
}

/// All eigenvalues of the pencil `b x = λ a x` (descending), for `a` positive definite.
pub fn pencil_top_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("pencil stiffness matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(b).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c =
        l.solve_lower_triangular(&x.transpose()).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    Ok(symmetric_eigen_desc(&c).0)
}
