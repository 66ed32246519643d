//! Pointwise Hermite functions and the transform between samples and
//! coefficients.
//!
//! `ψ_0(x) = (2π)^{−1/4} e^{−x²/4}`, `ψ_{n+1} = (xψ_n − √n ψ_{n−1})/√(n+1)`,
//! `ψ_n' = (√n ψ_{n−1} − √(n+1) ψ_{n+1})/2`, `ψ_n'' = (x²/4 − n − ½)ψ_n`.
//! The ratios `p_n = ψ_n/ψ_0` are the normalized probabilists' Hermite
//! polynomials, with `p_n' = √n p_{n−1}`.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use super::{OracleError, QuadratureGrid};
use crate::basis::{BasisTruncation, CoeffVector};
use crate::moments::GaussianMixtureSpec;

/// Top-level energy fraction above which a transform is flagged as aliased.
pub const ALIASING_THRESHOLD: f64 = 1e-6;

/// `ψ_0(x), …, ψ_n(x)`.
pub fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push((2.0 * std::f64::consts::PI).powf(-0.25) * (-0.25 * x * x).exp());
    for k in 0..n {
        let prev = if k == 0 { 0.0 } else { out[k - 1] };
        let kf = k as f64;
        out.push((x * out[k] - kf.sqrt() * prev) / (kf + 1.0).sqrt());
    }
    out
}

/// Values, first and second derivatives of `ψ_0, …, ψ_n` at `x`.
#[derive(Clone, Debug)]
pub struct HermiteJet {
    pub value: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl HermiteJet {
    pub fn new(x: f64, n: usize) -> Self {
        let psi = hermite_functions(x, n + 1);
        let value: Vec<f64> = psi[..=n].to_vec();
        let first = (0..=n)
            .map(|k| {
                let kf = k as f64;
                let down = if k == 0 { 0.0 } else { kf.sqrt() * psi[k - 1] };
                0.5 * (down - (kf + 1.0).sqrt() * psi[k + 1])
            })
            .collect();
        let second = (0..=n)
            .map(|k| (0.25 * x * x - k as f64 - 0.5) * psi[k])
            .collect();
        HermiteJet { value, first, second }
    }
}

/// `p_0(x), …, p_n(x)` with `p_n = ψ_n/ψ_0`.
pub fn hermite_polynomials(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    for k in 0..n {
        let prev = if k == 0 { 0.0 } else { out[k - 1] };
        let kf = k as f64;
        out.push((x * out[k] - kf.sqrt() * prev) / (kf + 1.0).sqrt());
    }
    out
}

/// `Ψ_α(v)` with its gradient and Hessian (row-major).
pub fn psi_jet(alpha: &[u32], jets: &[HermiteJet], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let d = alpha.len();
    let val: Vec<f64> = (0..d).map(|j| jets[j].value[alpha[j] as usize]).collect();
    let der: Vec<f64> = (0..d).map(|j| jets[j].first[alpha[j] as usize]).collect();
    let sec: Vec<f64> = (0..d).map(|j| jets[j].second[alpha[j] as usize]).collect();
    let prod_except = |skip: &[usize]| -> f64 {
        (0..d).filter(|j| !skip.contains(j)).map(|j| val[j]).product()
    };
    for i in 0..d {
        grad[i] = der[i] * prod_except(&[i]);
        for k in 0..d {
            hess[i * d + k] = if i == k {
                sec[i] * prod_except(&[i])
            } else {
                der[i] * der[k] * prod_except(&[i, k])
            };
        }
    }
    val.iter().product()
}

/// `Ψ_α(v)`.
pub fn psi(alpha: &[u32], v: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(v)
        .map(|(&a, &x)| hermite_functions(x, a as usize)[a as usize])
        .product()
}

/// Coefficients produced by a transform with its aliasing indicator.
#[derive(Clone, Debug)]
pub struct TransformResult {
    pub coefficients: CoeffVector,
    /// `‖ℙ_N c‖² / ‖c‖²`
    pub top_level_fraction: f64,
    pub aliased: bool,
}

fn finish(coefficients: CoeffVector) -> TransformResult {
    let n = coefficients.basis().max_degree();
    let total = coefficients.norm().powi(2);
    let top = coefficients.level_norms()[n].powi(2);
    let top_level_fraction = if total > 0.0 { top / total } else { 0.0 };
    let aliased = top_level_fraction > ALIASING_THRESHOLD;
    if aliased {
        warn!(
            "Hermite transform: top level carries {top_level_fraction:.3e} of the energy; the truncation may be too small"
        );
    }
    TransformResult {
        coefficients,
        top_level_fraction,
        aliased,
    }
}

/// Per-axis tables `ψ_n(x_i)` for all grid nodes.
fn node_tables(grid: &QuadratureGrid, n: usize) -> Vec<Vec<f64>> {
    grid.nodes_1d().iter().map(|&x| hermite_functions(x, n)).collect()
}

/// `c_α = Σ_i W_i g(v_i) Ψ_α(v_i)` over a variance-1 grid, given samples of
/// `g` at the grid points in grid order. Exact for `g` a polynomial times
/// `μ^{1/2}` of degree at most `2n − 1 − N`.
pub fn hermite_transform(
    samples: &[f64],
    grid: &QuadratureGrid,
    basis: &Arc<BasisTruncation>,
) -> Result<TransformResult, OracleError> {
    check_grid(grid, basis)?;
    if samples.len() != grid.len() {
        return Err(OracleError::SampleCount {
            expected: grid.len(),
            got: samples.len(),
        });
    }
    let d = basis.dimension();
    let npa = grid.nodes_per_axis();
    let tables = node_tables(grid, basis.max_degree());
    let weights = grid.plain_weights();
    let values: Vec<f64> = basis
        .ordering()
        .par_iter()
        .map(|alpha| {
            let a = alpha.entries();
            let mut idx = vec![0usize; d];
            let mut acc = 0.0;
            for (i, (&s, &w)) in samples.iter().zip(weights).enumerate() {
                let mut r = i;
                for axis in (0..d).rev() {
                    idx[axis] = r % npa;
                    r /= npa;
                }
                let p: f64 = (0..d).map(|j| tables[idx[j]][a[j] as usize]).product();
                acc += w * s * p;
            }
            acc
        })
        .collect();
    Ok(finish(CoeffVector::new(basis.clone(), values)?))
}

/// Transform of a function sampled on the grid.
pub fn hermite_transform_fn(
    g: impl Fn(&[f64]) -> f64 + Sync,
    grid: &QuadratureGrid,
    basis: &Arc<BasisTruncation>,
) -> Result<TransformResult, OracleError> {
    let samples: Vec<f64> = grid.points().map(g).collect();
    hermite_transform(&samples, grid, basis)
}

fn check_grid(grid: &QuadratureGrid, basis: &BasisTruncation) -> Result<(), OracleError> {
    if grid.dimension() != basis.dimension() {
        return Err(OracleError::DimensionMismatch {
            expected: basis.dimension(),
            got: grid.dimension(),
        });
    }
    if grid.nodes_per_axis() < basis.max_degree() + 1 {
        return Err(OracleError::TooFewNodes {
            nodes: grid.nodes_per_axis(),
            required: basis.max_degree() + 1,
        });
    }
    if (grid.variance() - 1.0).abs() > 1e-15 {
        return Err(OracleError::InvalidVariance(grid.variance()));
    }
    Ok(())
}

/// Coefficients of the fluctuation `g = (f − μ)/√μ` of a Gaussian mixture:
/// `c_α = ∫ f p_α − δ_{α0}`, each component expectation evaluated by
/// Gauss–Hermite quadrature after a Cholesky change of variables. Exact when
/// `nodes_per_axis > N/2`.
pub fn mixture_coefficients(
    spec: &GaussianMixtureSpec,
    basis: &Arc<BasisTruncation>,
    nodes_per_axis: usize,
) -> Result<TransformResult, OracleError> {
    spec.validate()?;
    let d = basis.dimension();
    if spec.dimension() != d {
        return Err(OracleError::DimensionMismatch {
            expected: d,
            got: spec.dimension(),
        });
    }
    let n = basis.max_degree();
    // standard normal expectation: nodes for e^{−z²/2}, weights normalized
    let std = QuadratureGrid::new(d, nodes_per_axis.max(n / 2 + 1), 1.0)?;
    let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let mut values = vec![0.0; basis.len()];
    for comp in &spec.components {
        let chol = comp
            .covariance_matrix()
            .cholesky()
            .expect("validated covariance")
            .l();
        let mean = comp.mean_vector();
        let partial: Vec<f64> = std
            .points()
            .zip(std.gaussian_weights())
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(z, &w)| {
                let v = &mean + &chol * nalgebra::DVector::from_column_slice(z);
                let polys: Vec<Vec<f64>> = v.iter().map(|&x| hermite_polynomials(x, n)).collect();
                basis
                    .ordering()
                    .iter()
                    .map(|alpha| {
                        w * alpha
                            .entries()
                            .iter()
                            .enumerate()
                            .map(|(j, &a)| polys[j][a as usize])
                            .product::<f64>()
                    })
                    .collect::<Vec<f64>>()
            })
            .reduce(
                || vec![0.0; basis.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        for (v, p) in values.iter_mut().zip(partial) {
            *v += comp.weight * norm * p;
        }
    }
    values[0] -= 1.0;
    Ok(finish(CoeffVector::new(basis.clone(), values)?))
}

/// `Σ_α c_α Ψ_α(v)` at each point.
pub fn synthesize<'a>(c: &CoeffVector, points: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let n = c.basis().max_degree();
    let nonzero: Vec<(&[u32], f64)> = c
        .basis()
        .ordering()
        .iter()
        .zip(c.values())
        .filter(|(_, &v)| v != 0.0)
        .map(|(a, &v)| (a.entries(), v))
        .collect();
    points
        .into_iter()
        .map(|v| {
            let tables: Vec<Vec<f64>> = v.iter().map(|&x| hermite_functions(x, n)).collect();
            nonzero
                .iter()
                .map(|(a, c)| c * a.iter().enumerate().map(|(j, &k)| tables[j][k as usize]).product::<f64>())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::moments::GaussianComponent;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    #[test]
    fn derivative_identities() {
        for &x in &[-3.2, -0.4, 0.0, 1.1, 5.0] {
            let jet = HermiteJet::new(x, 10);
            let h = 1e-5;
            let plus = hermite_functions(x + h, 10);
            let minus = hermite_functions(x - h, 10);
            for n in 0..=10 {
                let fd = (plus[n] - minus[n]) / (2.0 * h);
                assert_abs_diff_eq!(jet.first[n], fd, epsilon = 1e-8);
                let fd2 = (plus[n] - 2.0 * jet.value[n] + minus[n]) / (h * h);
                assert_abs_diff_eq!(jet.second[n], fd2, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn polynomial_ratio() {
        let x = 0.73;
        let psi = hermite_functions(x, 8);
        let p = hermite_polynomials(x, 8);
        for n in 0..=8 {
            assert_abs_diff_eq!(psi[n], psi[0] * p[n], epsilon = 1e-15);
        }
    }

    #[test]
    fn transform_of_basis_function() {
        let b = enumerate_basis(2, 6).unwrap();
        let grid = QuadratureGrid::new(2, 12, 1.0).unwrap();
        let out = hermite_transform_fn(|v| psi(&[1, 0], v), &grid, &b).unwrap();
        let c = out.coefficients;
        assert_abs_diff_eq!(c.get(&[1, 0]), 1.0, epsilon = 1e-13);
        assert!(c.sub(&CoeffVector::unit(b.clone(), &[1, 0]).unwrap()).unwrap().max_abs() < 1e-12);
        assert!(!out.aliased);
    }

    #[test]
    fn transform_of_second_moment_function() {
        let b = enumerate_basis(2, 4).unwrap();
        let grid = QuadratureGrid::new(2, 10, 1.0).unwrap();
        let c = hermite_transform_fn(|v| v[0] * v[0] * psi(&[0, 0], v), &grid, &b)
            .unwrap()
            .coefficients;
        assert_abs_diff_eq!(c.get(&[2, 0]), SQRT_2, epsilon = 1e-13);
        assert_abs_diff_eq!(c.get(&[0, 0]), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(c.get(&[0, 2]), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn round_trip_band_limited() {
        let b = enumerate_basis(2, 8).unwrap();
        let grid = QuadratureGrid::new(2, 14, 1.0).unwrap();
        let c = CoeffVector::new(b.clone(), (0..b.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect()).unwrap();
        let samples = synthesize(&c, grid.points());
        let back = hermite_transform(&samples, &grid, &b).unwrap();
        assert!(back.coefficients.sub(&c).unwrap().max_abs() < 1e-12);
        let again = synthesize(&back.coefficients, grid.points());
        for (a, s) in again.iter().zip(&samples) {
            assert_abs_diff_eq!(a, s, epsilon = 1e-10);
        }
        assert!(back.aliased);
    }

    #[test]
    fn transform_refuses_small_grids() {
        let b = enumerate_basis(2, 8).unwrap();
        let grid = QuadratureGrid::new(2, 8, 1.0).unwrap();
        assert!(matches!(
            hermite_transform_fn(|_| 0.0, &grid, &b),
            Err(OracleError::TooFewNodes { .. })
        ));
    }

    #[test]
    fn mixture_coefficients_of_maxwellian_vanish() {
        let b = enumerate_basis(3, 6).unwrap();
        let c = mixture_coefficients(&GaussianMixtureSpec::maxwellian(3), &b, 8).unwrap();
        assert!(c.coefficients.max_abs() < 1e-14);
    }

    #[test]
    fn mixture_coefficients_match_grid_transform() {
        let b = enumerate_basis(2, 10).unwrap();
        let spec = GaussianMixtureSpec::new(vec![
            GaussianComponent::diagonal(0.6, vec![0.2, -0.1], &[1.1, 0.9]),
            GaussianComponent::diagonal(0.4, vec![-0.3, 0.15], &[0.95, 1.05]),
        ])
        .unwrap();
        let via_moments = mixture_coefficients(&spec, &b, 12).unwrap().coefficients;
        let dens = crate::oracle::MixtureDensity::new(&spec).unwrap();
        let grid = QuadratureGrid::new(2, 60, 1.0).unwrap();
        let via_grid = hermite_transform_fn(
            |v| {
                let s = psi(&[0, 0], v);
                (crate::oracle::Density::value(&dens, v) - s * s) / s
            },
            &grid,
            &b,
        )
        .unwrap()
        .coefficients;
        assert!(via_moments.sub(&via_grid).unwrap().max_abs() < 1e-10);
    }
}
