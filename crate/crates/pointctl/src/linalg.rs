//! Small symmetric-matrix helpers shared by the dynamics and metrics modules.
//!
//! All decompositions go through symmetric eigendecomposition with eigenvalue
//! clamping at zero, so covariance algebra never produces NaN from tiny
//! negative eigenvalues introduced by rounding.

use nalgebra::{DMatrix, SymmetricEigen};

/// (M + Mᵀ) / 2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest-magnitude negative eigenvalue tolerated before clamping is treated
/// as masking a real error (relative to the largest eigenvalue).
const PSD_EIG_SLACK: f64 = 1e-9;

fn eigen_clamped(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut eig = symmetrize(m).symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = -PSD_EIG_SLACK * max_eig.max(1.0);
    for ev in eig.eigenvalues.iter_mut() {
        debug_assert!(*ev >= floor, "eigenvalue {ev} below PSD slack {floor}");
        if *ev < 0.0 {
            *ev = 0.0;
        }
    }
    eig
}

/// Nearest-PSD projection: symmetrize, then clamp negative eigenvalues to 0.
pub fn clamp_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = eigen_clamped(m);
    &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose()
}

/// Symmetric PSD square root.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = eigen_clamped(m);
    let sqrt_vals = eig.eigenvalues.map(f64::sqrt);
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// `1e-12 * max(λ)` are treated as zero, so singular innovation covariances
/// (noise-free observation channels) yield a zero gain instead of a blow-up.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = eigen_clamped(m);
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = 1e-12 * max_eig.max(f64::MIN_POSITIVE);
    let inv_vals = eig.eigenvalues.map(|ev| if ev > cutoff { 1.0 / ev } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
}

/// True when every entry is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
