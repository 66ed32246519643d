//! Weighted norms, the Grönwall certificate and coefficient-decay fits.
//!
//! The weighted norm is `‖e^{tδℋ}g‖ = (Σ_k e^{δ(2k+d)t} ‖ℙ_k g‖²)^{1/2}` and
//! the certified inequality is
//! `‖e^{tδℋ}g(t)‖² ≤ e^{2d(d−1)t}‖g_0‖² + (9/2)(e^{2d(d−1)t} − 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, CoeffVector};
use crate::evolution::Trajectory;
use crate::moments::MomentState;

/// Tolerated excess of the weighted norm over the bound.
pub const CERTIFICATION_SLACK: f64 = 1e-8;

/// Exponent beyond which the weighted norm is combined in log-sum-exp form.
const LSE_THRESHOLD: f64 = 600.0;

/// Minimum number of nonzero levels for a decay fit.
pub const MIN_FIT_LEVELS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("weight rate must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("certification refused: {0}")]
    CertificationRefused(String),
    #[error("decay fit needs {required} nonzero levels in the window, found {found}")]
    InsufficientLevels { found: usize, required: usize },
    #[error("decay fit of an all-zero vector")]
    ZeroInput,
    #[error("fit window [{k_min}, {k_max}] is empty or outside the truncation")]
    InvalidWindow { k_min: usize, k_max: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Basis(#[from] BasisError),
}

fn check_args(t: f64, delta: f64) -> Result<(), DiagnosticsError> {
    if !(t >= 0.0) {
        return Err(DiagnosticsError::NegativeTime(t));
    }
    if !(delta > 0.0) {
        return Err(DiagnosticsError::NonPositiveDelta(delta));
    }
    Ok(())
}

/// `ln ‖e^{tδℋ}g‖`, `−∞` for `g = 0`.
pub fn weighted_norm_ln(g: &CoeffVector, t: f64, delta: f64) -> Result<f64, DiagnosticsError> {
    check_args(t, delta)?;
    let d = g.basis().dimension() as f64;
    let terms: Vec<f64> = g
        .level_norms()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0.0)
        .map(|(k, &n)| delta * (2.0 * k as f64 + d) * t + 2.0 * n.ln())
        .collect();
    let Some(m) = terms.iter().copied().reduce(f64::max) else {
        return Ok(f64::NEG_INFINITY);
    };
    Ok(0.5 * (m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()))
}

/// `‖e^{tδℋ}g‖`. Direct summation unless `δt(2N+d)` exceeds 600, in which
/// case the log-sum-exp form is used.
pub fn weighted_norm(g: &CoeffVector, t: f64, delta: f64) -> Result<f64, DiagnosticsError> {
    check_args(t, delta)?;
    let d = g.basis().dimension() as f64;
    let n = g.basis().max_degree() as f64;
    if delta * t * (2.0 * n + d) > LSE_THRESHOLD {
        return Ok(weighted_norm_ln(g, t, delta)?.exp());
    }
    let sum: f64 = g
        .level_norms()
        .iter()
        .enumerate()
        .map(|(k, &nk)| (delta * (2.0 * k as f64 + d) * t).exp() * nk * nk)
        .sum();
    Ok(sum.sqrt())
}

/// `√(e^{2d(d−1)t}‖g_0‖² + 4.5(e^{2d(d−1)t} − 1))`.
pub fn theorem_bound(g0_norm: f64, d: usize, t: f64) -> f64 {
    let rate = 2.0 * (d * (d - 1)) as f64 * t;
    (rate.exp() * g0_norm * g0_norm + 4.5 * rate.exp_m1()).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormReport {
    pub t: f64,
    pub delta: f64,
    pub value: f64,
    pub bound: f64,
    /// `bound − value`
    pub margin: f64,
    pub level_norms: Vec<f64>,
}

impl WeightedNormReport {
    pub fn new(g: &CoeffVector, t: f64, delta: f64, g0_norm: f64) -> Result<Self, DiagnosticsError> {
        let value = weighted_norm(g, t, delta)?;
        let bound = theorem_bound(g0_norm, g.basis().dimension(), t);
        Ok(WeightedNormReport {
            t,
            delta,
            value,
            bound,
            margin: bound - value,
            level_norms: g.level_norms(),
        })
    }

    pub fn violates(&self, slack: f64) -> bool {
        !(self.value <= self.bound + slack)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub delta: f64,
    pub g0_norm: f64,
    pub slack: f64,
    pub reports: Vec<WeightedNormReport>,
    pub violations: usize,
    /// `max(value − bound)` over all samples; negative when every margin is positive.
    pub max_violation: f64,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check the Grönwall bound at every sampled time of a trajectory. The
/// weight rate is taken from `state.delta`.
pub fn certify_run(trajectory: &Trajectory, state: &MomentState) -> Result<Certification, DiagnosticsError> {
    let delta = state.delta.ok_or_else(|| {
        DiagnosticsError::CertificationRefused(format!(
            "sup|α_j| = {:.6} leaves no admissible weight rate (needs < d−1 = {})",
            state.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())),
            state.dimension - 1
        ))
    })?;
    let (_, g0) = trajectory
        .iter()
        .next()
        .ok_or(DiagnosticsError::EmptyTrajectory)?;
    let g0_norm = g0.norm();
    let reports = trajectory
        .iter()
        .map(|(t, g)| WeightedNormReport::new(g, t, delta, g0_norm))
        .collect::<Result<Vec<_>, _>>()?;
    let violations = reports.iter().filter(|r| r.violates(CERTIFICATION_SLACK)).count();
    let max_violation = reports
        .iter()
        .map(|r| r.value - r.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Certification {
        delta,
        g0_norm,
        slack: CERTIFICATION_SLACK,
        reports,
        violations,
        max_violation,
    })
}

/// Least-squares line through `(k, ln‖ℙ_k g‖)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t: f64,
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub levels_used: usize,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Fit over the default window `[2, N−2]`.
pub fn fit_level_decay(g: &CoeffVector, t: f64) -> Result<DecayFit, DiagnosticsError> {
    let n = g.basis().max_degree();
    fit_level_decay_window(g, t, 2, n.saturating_sub(2))
}

pub fn fit_level_decay_window(
    g: &CoeffVector,
    t: f64,
    k_min: usize,
    k_max: usize,
) -> Result<DecayFit, DiagnosticsError> {
    if g.max_abs() == 0.0 {
        return Err(DiagnosticsError::ZeroInput);
    }
    if k_min > k_max || k_max > g.basis().max_degree() {
        return Err(DiagnosticsError::InvalidWindow { k_min, k_max });
    }
    let norms = g.level_norms();
    let points: Vec<(f64, f64)> = (k_min..=k_max)
        .filter(|&k| norms[k] > 0.0 && norms[k].is_finite())
        .map(|k| (k as f64, norms[k].ln()))
        .collect();
    if points.len() < MIN_FIT_LEVELS {
        return Err(DiagnosticsError::InsufficientLevels {
            found: points.len(),
            required: MIN_FIT_LEVELS,
        });
    }
    let m = points.len() as f64;
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        t,
        slope,
        intercept,
        window: (k_min, k_max),
        levels_used: points.len(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::evolution::exact_semigroup;
    use crate::operators::build_harmonic;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn weighted_norm_examples() {
        let b = enumerate_basis(3, 4).unwrap();
        let g = CoeffVector::unit(b.clone(), &[1, 1, 0]).unwrap();
        assert_relative_eq!(weighted_norm(&g, 1.0, 0.2).unwrap(), 0.7f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(weighted_norm(&g, 1.0, 0.2).unwrap(), 2.013753, max_relative = 1e-6);
        let h = CoeffVector::new(b.clone(), (0..b.len()).map(|i| (i as f64).sin()).collect()).unwrap();
        assert_relative_eq!(weighted_norm(&h, 0.0, 0.5).unwrap(), h.norm(), max_relative = 1e-15);
        assert!(weighted_norm(&h, -1.0, 0.5).is_err());
        assert!(weighted_norm(&h, 1.0, 0.0).is_err());
    }

    #[test]
    fn geometric_sum() {
        // one unit of norm per level
        let b = enumerate_basis(2, 6).unwrap();
        let mut g = CoeffVector::zeros(b.clone());
        for k in 0..=6 {
            let r = b.level_range(k).unwrap();
            g.values_mut()[r.start] = 1.0;
        }
        let (t, delta) = (0.8f64, 0.3f64);
        let q = (2.0 * delta * t).exp();
        let closed = (delta * 2.0 * t).exp() * (q.powi(7) - 1.0) / (q - 1.0);
        assert_relative_eq!(weighted_norm(&g, t, delta).unwrap().powi(2), closed, max_relative = 1e-13);
    }

    #[test]
    fn log_sum_exp_branch_agrees() {
        let b = enumerate_basis(2, 10).unwrap();
        let g = CoeffVector::new(b.clone(), (0..b.len()).map(|i| 1.0 / (1.0 + i as f64)).collect()).unwrap();
        let (t, delta) = (10.0, 0.9);
        let direct = weighted_norm(&g, t, delta).unwrap();
        let ln = weighted_norm_ln(&g, t, delta).unwrap();
        assert_relative_eq!(direct.ln(), ln, max_relative = 1e-13);
        let huge = weighted_norm_ln(&g, 1e4, 1.0).unwrap();
        assert!(huge.is_finite());
        assert_eq!(weighted_norm_ln(&CoeffVector::zeros(b), 1.0, 1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(theorem_bound(0.1, 2, 0.0), 0.1);
        let e2 = 2f64.exp();
        assert_relative_eq!(theorem_bound(0.1, 2, 0.5), (e2 * 0.01 + 4.5 * (e2 - 1.0)).sqrt(), max_relative = 1e-15);
        let mut prev = 0.0;
        for i in 0..50 {
            let b = theorem_bound(0.3, 3, i as f64 * 0.05);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn decay_fit_of_harmonic_semigroup() {
        let b = enumerate_basis(2, 12).unwrap();
        let mut flat = CoeffVector::zeros(b.clone());
        for k in 0..=12 {
            let r = b.level_range(k).unwrap();
            flat.values_mut()[r.start] = 1.0;
        }
        let t = 0.7;
        let g = exact_semigroup(&build_harmonic(&b), &flat, t, 1.0).unwrap();
        let fit = fit_level_decay(&g, t).unwrap();
        assert_abs_diff_eq!(fit.slope, -t, epsilon = 1e-12);
        assert_eq!(fit.window, (2, 10));
        assert!(fit.residual < 1e-12);
        let white = fit_level_decay(&flat, 0.0).unwrap();
        assert_abs_diff_eq!(white.slope, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn decay_fit_refusals() {
        let b = enumerate_basis(2, 12).unwrap();
        assert_eq!(
            fit_level_decay(&CoeffVector::zeros(b.clone()), 0.0).unwrap_err(),
            DiagnosticsError::ZeroInput
        );
        let g = CoeffVector::unit(b.clone(), &[3, 0]).unwrap();
        assert!(matches!(
            fit_level_decay(&g, 0.0),
            Err(DiagnosticsError::InsufficientLevels { found: 1, .. })
        ));
        assert!(fit_level_decay_window(&g, 0.0, 5, 13).is_err());
    }
}
