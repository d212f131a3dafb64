//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// `(m + m') / 2`
pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest entry of `|m - m'|` relative to `max(1, max |m|)`.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrized(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Symmetric square root of a positive semidefinite matrix. Negative
/// eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrized(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&d) * v.transpose()
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn pd_inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = symmetrized(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&d) * v.transpose())
}

/// Factor `F` with `F F' = m` for a PSD `m`: Cholesky when possible, else the
/// eigenvalue route with negatives in `[-clamp, 0]` set to zero.
pub fn psd_factor(m: &DMatrix<f64>, clamp: f64) -> Option<DMatrix<f64>> {
    let sym = symmetrized(m);
    if let Some(ch) = sym.clone().cholesky() {
        return Some(ch.l());
    }
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v < -clamp) {
        return None;
    }
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&d))
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Count of singular values above `rank_tol * sigma_max`.
pub fn numerical_rank(singular_values: &[f64], rank_tol: f64) -> usize {
    let Some(&smax) = singular_values.first() else {
        return 0;
    };
    if smax == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stack vectors end to end.
pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    symmetrized(a).cholesky().map(|ch| ch.solve(b))
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve_lu(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}

/// `tr(a b)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let r = psd_sqrt(&m);
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
    }

    #[test]
    fn factor_of_semidefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let m = &v * v.transpose();
        let f = psd_factor(&m, 1e-10).unwrap();
        assert_relative_eq!(&f * f.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn rank_counts_relative_threshold() {
        assert_eq!(numerical_rank(&[1.0, 1e-3, 1e-12], 1e-9), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-9), 0);
        assert_eq!(numerical_rank(&[], 1e-9), 0);
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::identity(2, 2);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(2, 2)], 1.0);
        assert_eq!(d[(0, 1)], 0.0);
    }
}
