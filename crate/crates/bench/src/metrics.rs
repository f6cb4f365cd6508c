//! Relations between per-cycle and accumulated logical error rates.
//!
//! With a per-cycle flip probability `p_c`, the logical fidelity after `r`
//! cycles is `F(r) = (1 - 2 p_c)^r` and the accumulated error rate is
//! `p_l(r) = (1 - F(r)) / 2`.

use crate::error::{BenchError, Result};

/// `p_l(r) = (1 - (1 - 2 p_c)^r) / 2`.
pub fn accumulated_ler(p_c: f64, r: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&p_c) || !(r >= 0.0) {
        return Err(BenchError::Invalid(format!("need p_c in [0, 0.5] and r >= 0, got p_c={p_c}, r={r}")));
    }
    Ok((1.0 - (1.0 - 2.0 * p_c).powf(r)) / 2.0)
}

/// Inverse of the fidelity decay: `p_c = (1 - F^(1/r)) / 2`.
pub fn per_cycle_from_fidelity(fidelity: f64, r: f64) -> Result<f64> {
    if !(fidelity > 0.0) {
        return Err(BenchError::UndefinedFidelity(fidelity));
    }
    if fidelity > 1.0 || !(r >= 1.0) {
        return Err(BenchError::Invalid(format!("need F in (0, 1] and r >= 1, got F={fidelity}, r={r}")));
    }
    Ok((1.0 - fidelity.powf(1.0 / r)) / 2.0)
}

/// Per-cycle rate from an accumulated shot-level error rate over `r` cycles.
/// `None` when `p_l >= 0.5` (no fidelity left to invert).
pub fn per_cycle_from_ler(p_l: f64, r: f64) -> Option<f64> {
    per_cycle_from_fidelity(1.0 - 2.0 * p_l, r).ok()
}

/// One fidelity measurement after `r` cycles; `sigma` is the standard
/// deviation of `fidelity` (non-positive means unknown).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityPoint {
    pub r: f64,
    pub fidelity: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityFit {
    pub p_c: f64,
    pub p_c_sigma: f64,
    /// `F(0)`, the intercept; deviations from 1 absorb state preparation and
    /// final measurement errors.
    pub f0: f64,
    pub f0_sigma: f64,
    /// Intercept `ln F(0)` and slope `ln(1 - 2 p_c)`.
    pub intercept: f64,
    pub slope: f64,
    /// Covariance of `(intercept, slope)`.
    pub covariance: [[f64; 2]; 2],
}

/// Weighted least squares of `ln F(r) = ln F(0) + r ln(1 - 2 p_c)`.
///
/// Weights are `(F / sigma)^2` when every point carries an uncertainty, in
/// which case the covariance is taken as known. Otherwise the points are
/// weighted equally and the covariance is scaled by the residual variance.
pub fn fidelity_regression(points: &[FidelityPoint]) -> Result<FidelityFit> {
    if points.len() < 2 {
        return Err(BenchError::Invalid("fidelity regression needs at least two points".into()));
    }
    if let Some(p) = points.iter().find(|p| !(p.fidelity > 0.0)) {
        return Err(BenchError::UndefinedFidelity(p.fidelity));
    }
    let known = points.iter().all(|p| p.sigma > 0.0);
    let w: Vec<f64> = points
        .iter()
        .map(|p| if known { (p.fidelity / p.sigma).powi(2) } else { 1.0 })
        .collect();
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &wi) in points.iter().zip(&w) {
        let y = p.fidelity.ln();
        s0 += wi;
        s1 += wi * p.r;
        s2 += wi * p.r * p.r;
        t0 += wi * y;
        t1 += wi * p.r * y;
    }
    let det = s0 * s2 - s1 * s1;
    let r0 = points[0].r;
    if points.iter().all(|p| p.r == r0) || !(det.abs() > 1e-12 * s0 * s2) {
        return Err(BenchError::Singular("all points share the same cycle count".into()));
    }
    let intercept = (s2 * t0 - s1 * t1) / det;
    let slope = (s0 * t1 - s1 * t0) / det;
    let mut cov = [[s2 / det, -s1 / det], [-s1 / det, s0 / det]];
    if !known {
        let dof = points.len().saturating_sub(2);
        let rss: f64 = points
            .iter()
            .map(|p| (p.fidelity.ln() - intercept - slope * p.r).powi(2))
            .sum();
        let scale = if dof > 0 { rss / dof as f64 } else { 0.0 };
        for row in &mut cov {
            for x in row.iter_mut() {
                *x *= scale;
            }
        }
    }
    let decay = slope.exp();
    let f0 = intercept.exp();
    Ok(FidelityFit {
        p_c: (1.0 - decay) / 2.0,
        p_c_sigma: decay / 2.0 * cov[1][1].sqrt(),
        f0,
        f0_sigma: f0 * cov[0][0].sqrt(),
        intercept,
        slope,
        covariance: cov,
    })
}
