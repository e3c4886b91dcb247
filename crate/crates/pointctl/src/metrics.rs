//! Trajectory- and distribution-level comparison metrics.
//!
//! Deterministic models are scored against a reference by summed squared
//! error and maximum absolute error over per-step positions (or any other
//! scalar channel). Stochastic models are scored between per-step Gaussians
//! over (position, velocity): 2-Wasserstein distance averaged over steps, and
//! closed-form Gaussian KL divergence averaged over steps.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::lindyn::DistributionTrajectory;

/// Gaussian over (position, velocity) at one step.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian2 {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl Gaussian2 {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        // Stored symmetric; metric formulas assume it.
        let sym = (cov + cov.transpose()) * 0.5;
        Self { mean, cov: sym }
    }

    pub fn deterministic(mean: Vector2<f64>) -> Self {
        Self {
            mean,
            cov: Matrix2::zeros(),
        }
    }
}

/// Per-step (position, velocity) Gaussians of a distribution trajectory.
pub fn pos_vel_series(d: &DistributionTrajectory) -> Vec<Gaussian2> {
    d.steps
        .iter()
        .map(|s| {
            let (mean, cov) = s.pos_vel_marginal();
            Gaussian2::new(mean, cov)
        })
        .collect()
}

fn check_same_length(name: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "{name}: sequence lengths differ ({a} vs {b})"
        )));
    }
    Ok(())
}

/// Summed squared error Σ (a_n - b_n)².
pub fn sse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_length("sse", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Maximum absolute error max |a_n - b_n|.
pub fn max_error(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_length("max_error", a.len(), b.len())?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Symmetric PSD square root of a 2x2 matrix; tiny negative eigenvalues from
/// roundoff are clamped to zero.
fn psd_sqrt2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = m.symmetric_eigen();
    let mut sqrt_vals = eig.eigenvalues;
    for v in sqrt_vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * Matrix2::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// 2-Wasserstein distance between two Gaussians:
/// W₂² = ‖μ₁-μ₂‖² + tr Σ₁ + tr Σ₂ - 2 tr((Σ₁^½ Σ₂ Σ₁^½)^½).
/// The radicand is clamped at zero against roundoff.
pub fn wasserstein2(a: &Gaussian2, b: &Gaussian2) -> f64 {
    let dmu = a.mean - b.mean;
    if a.cov == b.cov {
        // Equal covariances reduce the cross term to tr Σ exactly; skipping
        // the eigensolves keeps self-distances at literal zero.
        return dmu.norm();
    }
    let sqrt_a = psd_sqrt2(&a.cov);
    let inner = sqrt_a * b.cov * sqrt_a;
    let cross = psd_sqrt2(&((inner + inner.transpose()) * 0.5));
    let w2_sq = dmu.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    w2_sq.max(0.0).sqrt()
}

/// Mean 2-Wasserstein distance over per-step Gaussian pairs.
pub fn mwd(a: &[Gaussian2], b: &[Gaussian2]) -> Result<f64> {
    check_same_length("mwd", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Dimension("mwd: empty sequences".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| wasserstein2(x, y))
        .sum::<f64>()
        / a.len() as f64)
}

/// Cholesky factor of a covariance, regularizing with +1e-12·I when the
/// matrix is singular. Keeps degenerate covariances (deterministic initial
/// frames, zero-variance references) usable by the KL divergence.
fn chol_regularized(cov: &Matrix2<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Const<2>>> {
    if let Some(c) = nalgebra::Cholesky::new(*cov) {
        return Ok(c);
    }
    let bumped = cov + Matrix2::identity() * 1e-12;
    nalgebra::Cholesky::new(bumped).ok_or_else(|| {
        Error::Parameter(format!(
            "covariance not positive definite even after regularization: {cov}"
        ))
    })
}

/// KL divergence D(a ‖ b) between Gaussians, closed form. The convention is
/// a = simulation, b = reference. Singular covariances on either side are
/// regularized with +1e-12·I; both sides get the same treatment so that
/// D(a ‖ a) stays zero.
pub fn gaussian_kl(a: &Gaussian2, b: &Gaussian2) -> Result<f64> {
    let chol_a = chol_regularized(&a.cov)?;
    let chol_b = chol_regularized(&b.cov)?;
    // Recover the possibly-regularized covariances from the factors.
    let cov_a = chol_a.l() * chol_a.l().transpose();
    let b_inv = chol_b.inverse();
    let dmu = b.mean - a.mean;
    let ln_det_a: f64 = chol_a.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let ln_det_b: f64 = chol_b.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let kl = 0.5
        * ((b_inv * cov_a).trace() + dmu.dot(&(b_inv * dmu)) - 2.0 + ln_det_b - ln_det_a);
    // Roundoff can land a hair below zero for near-identical inputs.
    Ok(kl.max(0.0))
}

/// Mean KL divergence over per-step Gaussian pairs, direction (simulation,
/// reference) per step.
pub fn mkl(a: &[Gaussian2], b: &[Gaussian2]) -> Result<f64> {
    check_same_length("mkl", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Dimension("mkl: empty sequences".into()));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += gaussian_kl(x, y)?;
    }
    Ok(total / a.len() as f64)
}
