//! Normalization of initial data and the moment quantities that drive the
//! reduced dynamics.
//!
//! Initial densities are Gaussian mixtures. Normalization maps a mixture to
//! unit mass, zero mean and `∫f|v|² = d`; diagonalization rotates it so the
//! second-moment matrix is `diag(T_1(0), …, T_d(0))` with entries descending.
//! The anisotropies `α_j = T_j(0) − 1` then sum to zero.

use std::f64::consts::SQRT_2;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, CoeffVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("component {component}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        component: usize,
        expected: usize,
        got: usize,
    },
    #[error("component {component}: weight must be finite")]
    NonFiniteWeight { component: usize },
    #[error("component {component}: covariance is not symmetric")]
    AsymmetricCovariance { component: usize },
    #[error("component {component}: covariance is not positive definite")]
    NotPositiveDefinite { component: usize },
    #[error("total mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("energy about the mean must be positive, got {0}")]
    DegenerateEnergy(f64),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("moment extraction needs max degree at least 2, got {0}")]
    TruncationTooSmall(usize),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianComponent {
    pub fn isotropic(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        GaussianComponent {
            weight,
            mean,
            covariance,
        }
    }

    pub fn diagonal(weight: f64, mean: Vec<f64>, variances: &[f64]) -> Self {
        let d = variances.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
            .collect();
        GaussianComponent {
            weight,
            mean,
            covariance,
        }
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }
}

/// A finite mixture `f_0 = Σ w_i 𝒩(m_i, C_i)`. Individual weights may be
/// negative as long as the total is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub components: Vec<GaussianComponent>,
}

/// Mass, first and second raw moments.
#[derive(Clone, Debug)]
pub struct RawMoments {
    pub mass: f64,
    /// `∫ f v`
    pub first: DVector<f64>,
    /// `∫ f v vᵀ`
    pub second: DMatrix<f64>,
}

impl RawMoments {
    pub fn mean(&self) -> DVector<f64> {
        &self.first / self.mass
    }

    /// `∫ f (v−V)(v−V)ᵀ`
    pub fn central_second(&self) -> DMatrix<f64> {
        let v = self.mean();
        &self.second - (&v * v.transpose()) * self.mass
    }

    /// `½ ∫ f |v−V|²`
    pub fn energy(&self) -> f64 {
        0.5 * self.central_second().trace()
    }
}

impl GaussianMixtureSpec {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self, MomentError> {
        let spec = GaussianMixtureSpec { components };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard Maxwellian `μ_d`.
    pub fn maxwellian(d: usize) -> Self {
        GaussianMixtureSpec {
            components: vec![GaussianComponent::isotropic(1.0, vec![0.0; d], 1.0)],
        }
    }

    pub fn dimension(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<(), MomentError> {
        let d = self.dimension();
        if self.components.is_empty() {
            return Err(MomentError::EmptyMixture);
        }
        for (i, c) in self.components.iter().enumerate() {
            if !c.weight.is_finite() {
                return Err(MomentError::NonFiniteWeight { component: i });
            }
            if c.mean.len() != d {
                return Err(MomentError::DimensionMismatch {
                    component: i,
                    expected: d,
                    got: c.mean.len(),
                });
            }
            if c.covariance.len() != d {
                return Err(MomentError::DimensionMismatch {
                    component: i,
                    expected: d,
                    got: c.covariance.len(),
                });
            }
            if let Some(row) = c.covariance.iter().find(|r| r.len() != d) {
                return Err(MomentError::DimensionMismatch {
                    component: i,
                    expected: d,
                    got: row.len(),
                });
            }
            let cov = c.covariance_matrix();
            let scale = cov.amax().max(f64::MIN_POSITIVE);
            if (&cov - cov.transpose()).amax() > 1e-12 * scale {
                return Err(MomentError::AsymmetricCovariance { component: i });
            }
            if !cov.iter().all(|x| x.is_finite()) || cov.cholesky().is_none() {
                return Err(MomentError::NotPositiveDefinite { component: i });
            }
        }
        let mass = self.total_weight();
        if !(mass > 0.0) {
            return Err(MomentError::NonPositiveMass(mass));
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn raw_moments(&self) -> RawMoments {
        let d = self.dimension();
        let mut first = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for c in &self.components {
            let m = c.mean_vector();
            first += &m * c.weight;
            second += (c.covariance_matrix() + &m * m.transpose()) * c.weight;
        }
        RawMoments {
            mass: self.total_weight(),
            first,
            second,
        }
    }

    /// Image under `v ↦ Aᵀ(v − b)/s`, with density mass scaled by `1/mass`.
    fn transformed(&self, shift: &DVector<f64>, scale: f64, rotation: &DMatrix<f64>, mass: f64) -> Self {
        let rt = rotation.transpose();
        let components = self
            .components
            .iter()
            .map(|c| {
                let m = &rt * (c.mean_vector() - shift) / scale;
                let cov = &rt * c.covariance_matrix() * rotation / (scale * scale);
                let d = m.len();
                GaussianComponent {
                    weight: c.weight / mass,
                    mean: m.iter().copied().collect(),
                    covariance: (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect(),
                }
            })
            .collect();
        GaussianMixtureSpec { components }
    }
}

/// Affine change of velocity variables `v = translation + dilation · R w`,
/// where `w` is the normalized-frame velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFrame {
    pub translation: Vec<f64>,
    pub dilation: f64,
    pub rotation: Vec<Vec<f64>>,
}

impl AffineFrame {
    pub fn identity(d: usize) -> Self {
        AffineFrame {
            translation: vec![0.0; d],
            dilation: 1.0,
            rotation: to_rows(&DMatrix::identity(d, d)),
        }
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.rotation)
    }

    /// The frame obtained by applying `self` first and `inner` inside it:
    /// `v = b₁ + s₁R₁(b₂ + s₂R₂w)`.
    pub fn compose(&self, inner: &AffineFrame) -> AffineFrame {
        let r1 = self.rotation_matrix();
        let b = DVector::from_column_slice(&self.translation)
            + &r1 * DVector::from_column_slice(&inner.translation) * self.dilation;
        AffineFrame {
            translation: b.iter().copied().collect(),
            dilation: self.dilation * inner.dilation,
            rotation: to_rows(&(r1 * inner.rotation_matrix())),
        }
    }

    /// Map a normalized-frame velocity back to the original frame.
    pub fn to_original(&self, w: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(&self.translation)
            + self.rotation_matrix() * DVector::from_column_slice(w) * self.dilation;
        v.iter().copied().collect()
    }

    /// Largest entrywise distance to another frame.
    pub fn max_abs_diff(&self, other: &AffineFrame) -> f64 {
        let t = self
            .translation
            .iter()
            .zip(&other.translation)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let r = (self.rotation_matrix() - other.rotation_matrix()).amax();
        t.max(r).max((self.dilation - other.dilation).abs())
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Rescale to unit mass, zero mean and `∫f|v|² = d`, via
/// `f = (M/s^d) f̃((v−V)/s)` with `s = √(2E/(Md))`.
pub fn normalize_distribution(
    spec: &GaussianMixtureSpec,
) -> Result<(GaussianMixtureSpec, AffineFrame), MomentError> {
    spec.validate()?;
    let d = spec.dimension();
    let raw = spec.raw_moments();
    let energy = raw.energy();
    if !(energy > 0.0) {
        return Err(MomentError::DegenerateEnergy(energy));
    }
    let mean = raw.mean();
    let scale = (2.0 * energy / (raw.mass * d as f64)).sqrt();
    let normalized = spec.transformed(&mean, scale, &DMatrix::identity(d, d), raw.mass);
    let frame = AffineFrame {
        translation: mean.iter().copied().collect(),
        dilation: scale,
        rotation: to_rows(&DMatrix::identity(d, d)),
    };
    Ok((normalized, frame))
}

/// Eigenvalues closer than this (relative) are treated as one cluster.
const DEGENERACY_TOL: f64 = 1e-10;

/// Orthogonal `R` with `det R = +1` such that `Rᵀ S R = diag(T0)` with `T0`
/// descending, `S` the second-moment matrix of the (normalized) mixture.
///
/// Each column except the last has its first nonzero component positive; the
/// last column's sign fixes the determinant. Inside a degenerate cluster the
/// basis is obtained by Gram–Schmidt on the projected coordinate axes, so a
/// fully degenerate matrix yields the identity.
pub fn diagonalize_second_moments(spec: &GaussianMixtureSpec) -> (DMatrix<f64>, Vec<f64>) {
    let s = spec.raw_moments().central_second() / spec.total_weight();
    diagonalize_symmetric(&s)
}

pub(crate) fn diagonalize_symmetric(s: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let d = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (values[end - 1] - values[end]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start == 1 {
            columns.push(eig.eigenvectors.column(order[start]).into_owned());
        } else {
            let mut proj = DMatrix::zeros(d, d);
            for &i in &order[start..end] {
                let v = eig.eigenvectors.column(i);
                proj += &v * v.transpose();
            }
            let mut found: Vec<DVector<f64>> = Vec::new();
            for axis in 0..d {
                if found.len() == end - start {
                    break;
                }
                let mut w = proj.column(axis).into_owned();
                for u in &found {
                    w -= u * u.dot(&w);
                }
                let norm = w.norm();
                if norm > 1e-8 {
                    found.push(w / norm);
                }
            }
            columns.extend(found);
        }
        start = end;
    }
    for col in columns.iter_mut().take(d - 1) {
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-14) {
            if *first < 0.0 {
                *col *= -1.0;
            }
        }
    }
    let mut r = DMatrix::from_columns(&columns);
    if r.determinant() < 0.0 {
        let mut last = r.column_mut(d - 1);
        last *= -1.0;
    }
    (r, values)
}

/// Normalize, then rotate into the diagonalizing frame.
pub fn prepare_initial_data(
    spec: &GaussianMixtureSpec,
) -> Result<(GaussianMixtureSpec, AffineFrame, Vec<f64>), MomentError> {
    let (normalized, frame) = normalize_distribution(spec)?;
    let (rotation, t0) = diagonalize_second_moments(&normalized);
    let d = spec.dimension();
    let rotated = normalized.transformed(&DVector::zeros(d), 1.0, &rotation, 1.0);
    let frame = frame.compose(&AffineFrame {
        translation: vec![0.0; d],
        dilation: 1.0,
        rotation: to_rows(&rotation),
    });
    Ok((rotated, frame, t0))
}

fn require_degree_two(g: &CoeffVector) -> Result<(), MomentError> {
    let n = g.basis().max_degree();
    if n < 2 {
        return Err(MomentError::TruncationTooSmall(n));
    }
    Ok(())
}

fn unit_index(d: usize, axes: &[usize]) -> Vec<u32> {
    let mut e = vec![0u32; d];
    for &a in axes {
        e[a] += 1;
    }
    e
}

/// `α_j = ∫ v_j² √μ g_0 = √2 c_{2e_j} + c_0`.
pub fn compute_alpha(g0: &CoeffVector) -> Result<Vec<f64>, MomentError> {
    require_degree_two(g0)?;
    let d = g0.basis().dimension();
    let c0 = g0.get(&vec![0; d]);
    let alpha: Vec<f64> = (0..d)
        .map(|j| SQRT_2 * g0.get(&unit_index(d, &[j, j])) + c0)
        .collect();
    let sum: f64 = alpha.iter().sum();
    if sum.abs() > 1e-10 {
        warn!("anisotropies do not sum to zero (Σα = {sum:e})");
    }
    Ok(alpha)
}

/// Where a vector of anisotropies sits relative to the theorem's hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admissibility {
    /// `−1 < α_j < d−1` for all `j`.
    Admissible,
    /// Some `α_j` lies outside `(−1, d−1)`, so `f_0` cannot be a nonnegative
    /// density, but `sup|α_j| < d−1` still admits a weight rate.
    PositivityRangeViolated,
    /// `sup|α_j| ≥ d−1`: no weight rate exists.
    NoValidDelta,
}

pub fn classify_alpha(alpha: &[f64], d: usize) -> Admissibility {
    let top = (d - 1) as f64;
    let sup = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if !(sup < top) {
        Admissibility::NoValidDelta
    } else if alpha.iter().all(|&a| a > -1.0 && a < top) {
        Admissibility::Admissible
    } else {
        Admissibility::PositivityRangeViolated
    }
}

/// Largest weight rate allowed by `δ ≤ 1` and `sup|α_j| ≤ d−1−δ`.
pub fn max_delta(alpha: &[f64], d: usize) -> Option<f64> {
    let sup = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let room = (d - 1) as f64 - sup;
    (room > 0.0).then(|| room.min(1.0))
}

/// Default weight rate: 0.99 times [`max_delta`].
pub fn admissible_delta(alpha: &[f64], d: usize) -> Option<f64> {
    max_delta(alpha, d).map(|m| 0.99 * m)
}

/// `T_j(t) = 1 + (T_j(0) − 1) e^{−4dt}`.
pub fn temperature_closed_form(t0: &[f64], d: usize, t: f64) -> Result<Vec<f64>, MomentError> {
    if !(t >= 0.0) {
        return Err(MomentError::NegativeTime(t));
    }
    let decay = (-4.0 * d as f64 * t).exp();
    Ok(t0.iter().map(|&x| 1.0 + (x - 1.0) * decay).collect())
}

/// Moment defects of a fluctuation, read off its low coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentDefects {
    /// `∫ √μ g = c_0`
    pub mass: f64,
    /// `∫ v_j √μ g = c_{e_j}`
    pub momentum: Vec<f64>,
    /// `∫ |v|² √μ g = √2 Σ_j c_{2e_j} + d c_0`
    pub energy: f64,
    /// `∫ v_j v_k √μ g = c_{e_j+e_k}` for `j < k`, row-major over pairs.
    pub off_diagonal: Vec<f64>,
    /// `α_j(t) = √2 c_{2e_j} + c_0`
    pub alpha: Vec<f64>,
}

impl MomentDefects {
    /// Largest magnitude among mass, momentum, energy and off-diagonal defects.
    pub fn max_conservation_defect(&self) -> f64 {
        std::iter::once(self.mass)
            .chain(self.momentum.iter().copied())
            .chain(std::iter::once(self.energy))
            .chain(self.off_diagonal.iter().copied())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn extract_moments(g: &CoeffVector) -> Result<MomentDefects, MomentError> {
    require_degree_two(g)?;
    let d = g.basis().dimension();
    let c0 = g.get(&vec![0; d]);
    let momentum = (0..d).map(|j| g.get(&unit_index(d, &[j]))).collect();
    let diag: Vec<f64> = (0..d).map(|j| g.get(&unit_index(d, &[j, j]))).collect();
    let mut off_diagonal = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            off_diagonal.push(g.get(&unit_index(d, &[j, k])));
        }
    }
    Ok(MomentDefects {
        mass: c0,
        momentum,
        energy: SQRT_2 * diag.iter().sum::<f64>() + d as f64 * c0,
        off_diagonal,
        alpha: diag.iter().map(|c| SQRT_2 * c + c0).collect(),
    })
}

/// Resolved moment data of a run, expressed in the diagonalizing frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub dimension: usize,
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub second_moment: Vec<Vec<f64>>,
    pub t0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub admissibility: Admissibility,
    /// `None` when no admissible weight rate exists.
    pub delta: Option<f64>,
}

impl MomentState {
    /// Moment state of `f = μ + √μ g_0`, read from its coefficients.
    pub fn from_coefficients(g0: &CoeffVector) -> Result<Self, MomentError> {
        let m = extract_moments(g0)?;
        let d = g0.basis().dimension();
        let mut second = DMatrix::<f64>::identity(d, d);
        let mut p = 0;
        for j in 0..d {
            second[(j, j)] += m.alpha[j];
            for k in j + 1..d {
                second[(j, k)] = m.off_diagonal[p];
                second[(k, j)] = m.off_diagonal[p];
                p += 1;
            }
        }
        let t0: Vec<f64> = m.alpha.iter().map(|a| 1.0 + a).collect();
        Ok(MomentState {
            dimension: d,
            mass: 1.0 + m.mass,
            momentum: m.momentum,
            energy: 0.5 * (d as f64 + m.energy),
            second_moment: to_rows(&second),
            admissibility: classify_alpha(&m.alpha, d),
            delta: admissible_delta(&m.alpha, d),
            t0,
            alpha: m.alpha,
        })
    }

    /// Moment state of a normalized, diagonalized mixture.
    pub fn from_mixture(spec: &GaussianMixtureSpec) -> Self {
        let d = spec.dimension();
        let raw = spec.raw_moments();
        let t0: Vec<f64> = (0..d).map(|j| raw.second[(j, j)] / raw.mass).collect();
        let alpha: Vec<f64> = t0.iter().map(|t| t - 1.0).collect();
        MomentState {
            dimension: d,
            mass: raw.mass,
            momentum: raw.first.iter().copied().collect(),
            energy: 0.5 * raw.second.trace(),
            second_moment: to_rows(&raw.second),
            admissibility: classify_alpha(&alpha, d),
            delta: admissible_delta(&alpha, d),
            t0,
            alpha,
        }
    }
}
