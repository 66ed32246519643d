//! Eigen-decomposition of symmetric operators and kernel queries.
//!
//! Degree-preserving operators are diagonalized level by level, which keeps
//! dense work at the size of the largest level block.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{OperatorError, SparseOperator, Symmetry};
use crate::basis::{BasisTruncation, CoeffVector};

pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigenpairs in ascending eigenvalue order.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one column per eigenvalue.
    pub vectors: DMatrix<f64>,
    /// `max_i ‖M v_i − λ_i v_i‖`
    pub max_residual: f64,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

fn eigen_block(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), OperatorError> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let scale = m.amax().max(1.0);
    let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        OperatorError::EigenNonConvergence {
            residual: f64::INFINITY,
        }
    })?;
    let residual = (&m * &eig.eigenvectors - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)).amax();
    if residual > 1e-9 * scale {
        return Err(OperatorError::EigenNonConvergence { residual });
    }
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Full spectrum of a symmetric-flagged operator.
pub fn symmetric_spectrum(op: &SparseOperator) -> Result<Spectrum, OperatorError> {
    if op.symmetry() != Symmetry::Symmetric {
        return Err(OperatorError::NotSymmetric {
            asymmetry: op.asymmetry(),
        });
    }
    let basis = op.basis();
    let n = op.dim();
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    if op.preserves_degree() {
        for k in 0..=basis.max_degree() {
            let range = basis.level_range(k)?;
            let (vals, vecs) = eigen_block(op.level_block(k)?)?;
            for (i, &lambda) in vals.iter().enumerate() {
                let mut v = DVector::zeros(n);
                v.rows_mut(range.start, range.len()).copy_from(&vecs.column(i));
                pairs.push((lambda, v));
            }
        }
    } else {
        let (vals, vecs) = eigen_block(op.to_dense())?;
        for (i, &lambda) in vals.iter().enumerate() {
            pairs.push((lambda, vecs.column(i).into_owned()));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    let mut max_residual: f64 = 0.0;
    let mut out = vec![0.0; n];
    for (i, &lambda) in values.iter().enumerate() {
        let col: Vec<f64> = vectors.column(i).iter().copied().collect();
        op.apply_into(&col, &mut out);
        let r = out
            .iter()
            .zip(&col)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(r);
    }
    Ok(Spectrum {
        values,
        vectors,
        max_residual,
    })
}

/// Orthonormal basis of the eigenspace with eigenvalues below `tol`.
pub fn kernel_basis(op: &SparseOperator, tol: f64) -> Result<Vec<CoeffVector>, OperatorError> {
    let spec = symmetric_spectrum(op)?;
    spec.values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l < tol)
        .map(|(i, _)| {
            CoeffVector::new(op.basis().clone(), spec.vectors.column(i).iter().copied().collect())
                .map_err(OperatorError::from)
        })
        .collect()
}

fn orthonormal_columns(vs: &[CoeffVector]) -> DMatrix<f64> {
    let n = vs.first().map_or(0, |v| v.len());
    let m = DMatrix::from_fn(n, vs.len(), |r, c| vs[c].values()[r]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax.max(1e-300))
        .map(|i| u.column(i).into_owned())
        .collect();
    if keep.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&keep)
    }
}

/// Sine of the largest principal angle between two spans. Returns 1 when
/// the spans have different dimension.
pub fn subspace_sine(a: &[CoeffVector], b: &[CoeffVector]) -> f64 {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let resid = &qb - &qa * (qa.transpose() * &qb);
    resid.svd(false, false).singular_values.max().min(1.0)
}

/// `Ψ_0`, `Ψ_{e_j}` and `|v|²μ^{1/2} = dΨ_0 + √2 Σ_j Ψ_{2e_j}`.
pub fn collisional_invariants(basis: &Arc<BasisTruncation>) -> Result<Vec<CoeffVector>, OperatorError> {
    let d = basis.dimension();
    if basis.max_degree() < 2 {
        return Err(OperatorError::TruncationTooSmall {
            required: 2,
            got: basis.max_degree(),
        });
    }
    let mut out = vec![CoeffVector::unit(basis.clone(), &vec![0; d])?];
    for j in 0..d {
        let mut e = vec![0u32; d];
        e[j] = 1;
        out.push(CoeffVector::unit(basis.clone(), &e)?);
    }
    let mut energy = CoeffVector::zeros(basis.clone());
    energy.set(&vec![0; d], d as f64)?;
    for j in 0..d {
        let mut e = vec![0u32; d];
        e[j] = 2;
        energy.set(&e, std::f64::consts::SQRT_2)?;
    }
    out.push(energy);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::operators::{build_harmonic, build_linearized_landau};

    #[test]
    fn harmonic_kernel_is_ground_state() {
        let b = enumerate_basis(2, 6).unwrap();
        let h = build_harmonic(&b);
        let shifted = h.sub(&SparseOperator::identity(b.clone()).scaled(1.0)).unwrap();
        let ker = kernel_basis(&shifted, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(ker.len(), 1);
        assert!((ker[0].get(&[0, 0]).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_of_linearized_operator() {
        let b = enumerate_basis(2, 10).unwrap();
        let l = build_linearized_landau(&b).unwrap();
        let ker = kernel_basis(&l, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(ker.len(), 4);
        let inv = collisional_invariants(&b).unwrap();
        assert!(subspace_sine(&ker, &inv) < 1e-8);
    }

    #[test]
    fn subspace_sine_detects_mismatch() {
        let b = enumerate_basis(2, 2).unwrap();
        let a = vec![CoeffVector::unit(b.clone(), &[1, 0]).unwrap()];
        let c = vec![CoeffVector::unit(b.clone(), &[0, 1]).unwrap()];
        assert!((subspace_sine(&a, &c) - 1.0).abs() < 1e-14);
        assert!(subspace_sine(&a, &a) < 1e-14);
    }

    #[test]
    fn general_operators_are_refused() {
        let b = enumerate_basis(2, 2).unwrap();
        let op = SparseOperator::from_triplets(b, vec![(0, 1, 1.0)], Symmetry::General).unwrap();
        assert!(symmetric_spectrum(&op).is_err());
    }
}
