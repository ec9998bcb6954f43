//! Small dense linear-algebra helpers shared by the checkers.

use nalgebra::DMatrix;

/// Relative tolerance applied to the smallest eigenvalue in PSD tests.
pub const PSD_REL_TOL: f64 = 1e-12;

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// `m` is positive semi-definite up to `-PSD_REL_TOL * scale`.
///
/// `scale` is usually the norm of `m` itself; callers comparing a difference
/// of two nearly equal matrices pass the norm of the operands instead.
pub fn is_psd_scaled(m: &DMatrix<f64>, scale: f64) -> bool {
    min_eigenvalue(m) >= -PSD_REL_TOL * scale
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    is_psd_scaled(m, symmetric_norm(m))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m + mᵀ`.
pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    (m + m.transpose()).amax()
}

/// Largest absolute entry of `m - mᵀ`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}
