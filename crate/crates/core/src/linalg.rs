//! Small dense helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Symmetric and skew-symmetric parts, `X = X^sy + X^asy`.
pub fn sym_asym(x: &RMat) -> (RMat, RMat) {
    let t = x.transpose();
    ((x + &t) * 0.5, (x - &t) * 0.5)
}

pub fn sym(x: &RMat) -> RMat {
    (x + x.transpose()) * 0.5
}

pub fn asym(x: &RMat) -> RMat {
    (x - x.transpose()) * 0.5
}

/// Hermitian part `(Z + Z*)/2`.
pub fn herm(z: &CMat) -> CMat {
    (z + z.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn to_complex(x: &RMat) -> CMat {
    x.map(|v| Complex64::new(v, 0.0))
}

/// `i·X` for real `X`.
pub fn times_i(x: &RMat) -> CMat {
    x.map(|v| Complex64::new(0.0, v))
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn hermitian_extremes(h: &CMat) -> (f64, f64) {
    let ev = SymmetricEigen::new(h.clone()).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Smallest eigenvalue of a Hermitian matrix with a unit eigenvector for it.
pub fn hermitian_min_pair(h: &CMat) -> (f64, DVector<Complex64>) {
    let se = SymmetricEigen::new(h.clone());
    let (k, lo) = se
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (lo, se.eigenvectors.column(k).into_owned())
}

/// Smallest eigenvalue of a real symmetric matrix with its eigenvector.
pub fn symmetric_min_pair(s: &RMat) -> (f64, DVector<f64>) {
    let se = SymmetricEigen::new(s.clone());
    let (k, lo) = se
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (lo, se.eigenvectors.column(k).into_owned())
}

/// Orthonormal basis (as columns) of the null space of `x`, by singular-value
/// thresholding relative to the largest singular value.
pub fn null_space(x: &RMat, rel_tol: f64) -> RMat {
    let n = x.ncols();
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    // Rows of v_t beyond the reported singular values span an exact kernel.
    for (k, row) in vt.row_iter().enumerate() {
        let s = svd.singular_values.get(k).copied().unwrap_or(0.0);
        if smax == 0.0 || s <= cut {
            cols.push(row.transpose());
        }
    }
    if cols.is_empty() {
        return RMat::zeros(n, 0);
    }
    RMat::from_columns(&cols)
}

/// Orthogonal projector `Q Qᵀ` onto the span of orthonormal columns.
pub fn projector(q: &RMat) -> RMat {
    if q.ncols() == 0 {
        return RMat::zeros(q.nrows(), q.nrows());
    }
    q * q.transpose()
}

/// Largest entrywise deviation from symmetry, `max |X_ij − X_ji|`.
pub fn asymmetry(x: &RMat) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for i in 0..x.nrows() {
        for j in i + 1..x.ncols() {
            let d = (x[(i, j)] - x[(j, i)]).abs();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    worst
}

/// Largest entrywise deviation from skew-symmetry, `max |X_ij + X_ji|`.
pub fn skew_defect(x: &RMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.nrows() {
        for j in i..x.ncols() {
            worst = worst.max((x[(i, j)] + x[(j, i)]).abs());
        }
    }
    worst
}

/// Matrix with a symmetric pair `v` at 1-based `(i, j)` and `(j, i)`.
pub fn sym_pair(m: usize, i: usize, j: usize, v: f64) -> RMat {
    let mut x = RMat::zeros(m, m);
    x[(i - 1, j - 1)] = v;
    x[(j - 1, i - 1)] = v;
    x
}

/// Matrix with `v` at 1-based `(i, j)` and `−v` at `(j, i)`.
pub fn skew_pair(m: usize, i: usize, j: usize, v: f64) -> RMat {
    let mut x = RMat::zeros(m, m);
    x[(i - 1, j - 1)] = v;
    x[(j - 1, i - 1)] = -v;
    x
}

/// Dense rows of a matrix, for serialisation.
pub fn rows_of(x: &RMat) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().cloned().collect()).collect()
}

/// Inverse of [`rows_of`]; `None` when rows are ragged or the matrix is not square.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<RMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return None;
    }
    Some(RMat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Largest entry magnitude of `a − b`, divided by `max(1, |b|_max)`.
pub fn rel_diff(a: &RMat, b: &RMat) -> f64 {
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    (a - b).iter().fold(0.0f64, |s, v| s.max(v.abs())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let x = RMat::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        let q = null_space(&x, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!((&x * &q).norm() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent() {
        let x = RMat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let p = projector(&null_space(&x, 1e-10));
        assert!((&p * &p - &p).norm() < 1e-14);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }
}
