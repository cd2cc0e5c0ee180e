//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Every SPD matrix that enters a factorization is symmetrized first, and
//! inverses are only formed for matrices that are returned to callers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Relative tolerance used for the symmetry invariant.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Relative eigenvalue tolerance for the PSD invariant of bound matrices.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub type CholeskyFactor = Cholesky<f64, Dyn>;

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `‖m − mᵀ‖_F ≤ tol·‖m‖_F`. Non-square matrices are never symmetric.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let asym = (m - m.transpose()).norm();
    asym <= rel_tol * m.norm()
}

/// Cholesky factor of the symmetrized matrix, `None` when not strictly PD.
pub fn cholesky(m: &DMatrix<f64>) -> Option<CholeskyFactor> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let sym = symmetrize(m);
    let max_diag = sym.diagonal().iter().fold(0.0f64, |acc, &v| acc.max(v));
    let factor = Cholesky::new(sym)?;
    // Pivots at rounding level mean the matrix is numerically singular.
    let floor = 4.0 * m.nrows() as f64 * f64::EPSILON * max_diag;
    let l = factor.l_dirty();
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= floor || l[(i, i)].is_nan()) {
        return None;
    }
    Some(factor)
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
pub fn spd_inverse(factor: &CholeskyFactor) -> DMatrix<f64> {
    symmetrize(&factor.inverse())
}

/// `Bᵀ M⁻¹ B` for `M = L Lᵀ`, computed as `(L⁻¹B)ᵀ(L⁻¹B)`.
pub fn inverse_quadratic_form(factor: &CholeskyFactor, b: &DMatrix<f64>) -> DMatrix<f64> {
    let w = factor
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(b)
        .expect("Cholesky diagonal is strictly positive");
    symmetrize(&(w.transpose() * w))
}

/// `ln det M` from a Cholesky factor.
pub fn log_det(factor: &CholeskyFactor) -> f64 {
    let l = factor.l_dirty();
    2.0 * (0..l.nrows()).map(|i| libm::log(l[(i, i)])).sum::<f64>()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut values = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    values.as_mut_slice().sort_by(f64::total_cmp);
    values
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetric_eigenvalues(m)[0]
}

/// Symmetric within [`SYMMETRY_TOLERANCE`] and PSD within `−rel_tol·|trace|`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !is_symmetric(m, SYMMETRY_TOLERANCE) {
        return false;
    }
    min_eigenvalue(m) >= -rel_tol * m.trace().abs()
}

/// `‖a − b‖_F / ‖b‖_F` (absolute when `b` is zero).
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Rectangular identity scaled by `value`.
pub fn scaled_identity(rows: usize, cols: usize, value: f64) -> DMatrix<f64> {
    DMatrix::identity(rows, cols) * value
}

/// Pairwise summation; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let (left, right) = values.split_at(values.len() / 2);
        pairwise_sum(left) + pairwise_sum(right)
    }
}
