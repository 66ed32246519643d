//! Hermite-ladder operator calculus on a truncated basis.
//!
//! Every operator is the Galerkin compression `S_N ∘ Op ∘ S_N`: entries whose
//! image falls outside the truncation are dropped. Axes are 0-based.
//!
//! The angular momentum generators are assembled from the ladder identity
//! `v_j ∂_k − v_k ∂_j = A_{+,j}A_{−,k} − A_{+,k}A_{−,j}`, which follows from
//! `v_j = A_{+,j} + A_{−,j}` and `∂_j = (A_{−,j} − A_{+,j})/2`. They preserve
//! the degree, so `Δ_S` and everything built from it are exact under
//! truncation.

mod sparse;
mod spectral;

use std::sync::Arc;

use thiserror::Error;

use crate::basis::{BasisError, BasisTruncation};

pub use sparse::{SparseOperator, Symmetry, SYMMETRY_TOL};
pub use spectral::{
    collisional_invariants, kernel_basis, subspace_sine, symmetric_spectrum, Spectrum,
    DEFAULT_KERNEL_TOL,
};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("axis {axis} outside 0..{dimension}")]
    AxisOutOfRange { axis: usize, dimension: usize },
    #[error("angular momentum needs axes j < k, got ({j}, {k})")]
    InvalidAxisPair { j: usize, k: usize },
    #[error("operator needs max degree at least {required}, got {got}")]
    TruncationTooSmall { required: usize, got: usize },
    #[error("entry ({row}, {col}) outside a {dim}×{dim} operator")]
    EntryOutOfRange { row: usize, col: usize, dim: usize },
    #[error("operator flagged symmetric but max|M − Mᵀ| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("operators live on different bases")]
    BasisMismatch,
    #[error("eigensolver did not converge (max residual {residual:e})")]
    EigenNonConvergence { residual: f64 },
    #[error("malformed triplet file: {0}")]
    Parse(String),
}

/// Direction of a ladder operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    /// `A_{+,j} = v_j/2 − ∂_j`
    Raise,
    /// `A_{−,j} = v_j/2 + ∂_j`
    Lower,
}

fn check_axis(basis: &BasisTruncation, axis: usize) -> Result<(), OperatorError> {
    if axis >= basis.dimension() {
        return Err(OperatorError::AxisOutOfRange {
            axis,
            dimension: basis.dimension(),
        });
    }
    Ok(())
}

/// `A_{±,j}` with `A_{+,j}Ψ_α = √(α_j+1) Ψ_{α+e_j}` and `A_{−,j}Ψ_α = √α_j Ψ_{α−e_j}`.
pub fn build_ladder(
    basis: &Arc<BasisTruncation>,
    axis: usize,
    direction: Ladder,
) -> Result<SparseOperator, OperatorError> {
    check_axis(basis, axis)?;
    let shift = match direction {
        Ladder::Raise => 1,
        Ladder::Lower => -1,
    };
    let mut triplets = Vec::new();
    for (col, alpha) in basis.ordering().iter().enumerate() {
        let Some(target) = alpha.shifted(axis, shift) else {
            continue;
        };
        let Some(row) = basis.position(&target) else {
            continue;
        };
        let a = alpha.entries()[axis] as f64;
        let value = match direction {
            Ladder::Raise => (a + 1.0).sqrt(),
            Ladder::Lower => a.sqrt(),
        };
        triplets.push((row, col, value));
    }
    SparseOperator::from_triplets(basis.clone(), triplets, Symmetry::General)
}

/// `ℋ = −Δ + |v|²/4`, diagonal with entry `d/2 + |α|`.
pub fn build_harmonic(basis: &Arc<BasisTruncation>) -> SparseOperator {
    let half_d = basis.dimension() as f64 / 2.0;
    SparseOperator::diagonal(basis.clone(), |i| half_d + basis.degree_at(i) as f64)
}

/// `L_{jk} = v_j∂_k − v_k∂_j = A_{+,j}A_{−,k} − A_{+,k}A_{−,j}`, for `j < k`.
///
/// Sign convention: `L_{01}Ψ_{e_0} = −Ψ_{e_1}`.
pub fn build_angular_momentum(
    basis: &Arc<BasisTruncation>,
    j: usize,
    k: usize,
) -> Result<SparseOperator, OperatorError> {
    check_axis(basis, j)?;
    check_axis(basis, k)?;
    if j >= k {
        return Err(OperatorError::InvalidAxisPair { j, k });
    }
    let mut triplets = Vec::new();
    for (col, alpha) in basis.ordering().iter().enumerate() {
        let e = alpha.entries();
        // A_{+,j}A_{−,k}: lower k, raise j
        if e[k] > 0 {
            let target = alpha.shifted(k, -1).and_then(|a| a.shifted(j, 1)).expect("valid shift");
            let row = basis.position(&target).expect("degree preserved");
            triplets.push((row, col, (e[k] as f64).sqrt() * (e[j] as f64 + 1.0).sqrt()));
        }
        // −A_{+,k}A_{−,j}: lower j, raise k
        if e[j] > 0 {
            let target = alpha.shifted(j, -1).and_then(|a| a.shifted(k, 1)).expect("valid shift");
            let row = basis.position(&target).expect("degree preserved");
            triplets.push((row, col, -(e[j] as f64).sqrt() * (e[k] as f64 + 1.0).sqrt()));
        }
    }
    SparseOperator::from_triplets(basis.clone(), triplets, Symmetry::General)
}

/// `Δ_S = ½ Σ_{j≠k} L_{jk}² = Σ_{j<k} L_{jk}²`.
pub fn build_laplace_beltrami(basis: &Arc<BasisTruncation>) -> Result<SparseOperator, OperatorError> {
    let d = basis.dimension();
    let mut acc = SparseOperator::from_triplets(basis.clone(), Vec::new(), Symmetry::Symmetric)?;
    for j in 0..d {
        for k in j + 1..d {
            let l = build_angular_momentum(basis, j, k)?;
            acc = acc.add(&l.matmul(&l)?)?;
        }
    }
    acc.into_symmetric()
}

/// `(d−1)(ℋ − d/2) − Δ_S` built from a supplied `Δ_S`.
pub fn reduced_generator_from(
    harmonic: &SparseOperator,
    laplace_beltrami: &SparseOperator,
) -> Result<SparseOperator, OperatorError> {
    let basis = harmonic.basis().clone();
    let d = basis.dimension() as f64;
    let shifted = harmonic.sub(&SparseOperator::identity(basis).scaled(d / 2.0))?;
    shifted.lincomb(d - 1.0, laplace_beltrami, -1.0)?.into_symmetric()
}

/// Autonomous generator of the reduced fluctuation equation,
/// `K = (d−1)(ℋ − d/2) − Δ_S`. Its eigenvalue on a degree-`k`
/// spherical-harmonic component of order `ℓ` is `(d−1)k + ℓ(ℓ+d−2)`.
pub fn build_reduced_generator(basis: &Arc<BasisTruncation>) -> Result<SparseOperator, OperatorError> {
    reduced_generator_from(&build_harmonic(basis), &build_laplace_beltrami(basis)?)
}

/// Linearized Landau operator for Maxwellian molecules,
/// `ℒ_L = K + [Δ_S − (d−1)(ℋ−d/2)]ℙ_1 + [−Δ_S − (d−1)(ℋ−d/2)]ℙ_2`.
pub fn linearized_from(
    harmonic: &SparseOperator,
    laplace_beltrami: &SparseOperator,
) -> Result<SparseOperator, OperatorError> {
    let basis = harmonic.basis().clone();
    if basis.max_degree() < 2 {
        return Err(OperatorError::TruncationTooSmall {
            required: 2,
            got: basis.max_degree(),
        });
    }
    let d = basis.dimension() as f64;
    let shifted = harmonic.sub(&SparseOperator::identity(basis.clone()).scaled(d / 2.0))?;
    let k = shifted.lincomb(d - 1.0, laplace_beltrami, -1.0)?;
    let p1 = SparseOperator::level_projector(basis.clone(), 1)?;
    let p2 = SparseOperator::level_projector(basis, 2)?;
    let c1 = laplace_beltrami.lincomb(1.0, &shifted, -(d - 1.0))?.matmul(&p1)?;
    let c2 = laplace_beltrami.lincomb(-1.0, &shifted, -(d - 1.0))?.matmul(&p2)?;
    k.add(&c1)?.add(&c2)?.into_symmetric()
}

pub fn build_linearized_landau(basis: &Arc<BasisTruncation>) -> Result<SparseOperator, OperatorError> {
    linearized_from(&build_harmonic(basis), &build_laplace_beltrami(basis)?)
}

/// `(A_{+,j})²`, truncated.
pub fn build_double_raise(basis: &Arc<BasisTruncation>, axis: usize) -> Result<SparseOperator, OperatorError> {
    let a = build_ladder(basis, axis, Ladder::Raise)?;
    a.matmul(&a)
}

/// All operators derived from one basis.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub basis: Arc<BasisTruncation>,
    pub raise: Vec<SparseOperator>,
    pub lower: Vec<SparseOperator>,
    pub harmonic: SparseOperator,
    pub laplace_beltrami: SparseOperator,
    /// `K = (d−1)(ℋ − d/2) − Δ_S`
    pub reduced_generator: SparseOperator,
    /// Present when `N ≥ 2`.
    pub linearized: Option<SparseOperator>,
}

impl OperatorSet {
    pub fn assemble(basis: &Arc<BasisTruncation>) -> Result<Self, OperatorError> {
        Self::assemble_with(basis, build_laplace_beltrami(basis)?)
    }

    /// Assemble around a caller-supplied `Δ_S`. Used to inject faults into
    /// the verification battery.
    pub fn assemble_with(
        basis: &Arc<BasisTruncation>,
        laplace_beltrami: SparseOperator,
    ) -> Result<Self, OperatorError> {
        if **laplace_beltrami.basis() != **basis {
            return Err(OperatorError::BasisMismatch);
        }
        let d = basis.dimension();
        let raise = (0..d)
            .map(|j| build_ladder(basis, j, Ladder::Raise))
            .collect::<Result<Vec<_>, _>>()?;
        let lower = (0..d)
            .map(|j| build_ladder(basis, j, Ladder::Lower))
            .collect::<Result<Vec<_>, _>>()?;
        let harmonic = build_harmonic(basis);
        let reduced_generator = reduced_generator_from(&harmonic, &laplace_beltrami)?;
        let linearized = if basis.max_degree() >= 2 {
            Some(linearized_from(&harmonic, &laplace_beltrami)?)
        } else {
            None
        };
        Ok(OperatorSet {
            basis: basis.clone(),
            raise,
            lower,
            harmonic,
            laplace_beltrami,
            reduced_generator,
            linearized,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{enumerate_basis, CoeffVector};

    fn apply_unit(op: &SparseOperator, alpha: &[u32]) -> CoeffVector {
        op.apply(&CoeffVector::unit(op.basis().clone(), alpha).unwrap()).unwrap()
    }

    #[test]
    fn ladder_examples() {
        let b = enumerate_basis(2, 4).unwrap();
        let up = build_ladder(&b, 0, Ladder::Raise).unwrap();
        let out = apply_unit(&up, &[0, 0]);
        assert_eq!(out.get(&[1, 0]), 1.0);
        assert_eq!(out.norm(), 1.0);
        let out = apply_unit(&up, &[2, 0]);
        assert!((out.get(&[3, 0]) - 3f64.sqrt()).abs() < 1e-15);
        let down = build_ladder(&b, 1, Ladder::Lower).unwrap();
        assert_eq!(apply_unit(&down, &[1, 0]).norm(), 0.0);
        assert!(build_ladder(&b, 2, Ladder::Raise).is_err());
    }

    #[test]
    fn raising_drops_top_level() {
        let b = enumerate_basis(2, 3).unwrap();
        let up = build_ladder(&b, 1, Ladder::Raise).unwrap();
        assert_eq!(apply_unit(&up, &[1, 2]).norm(), 0.0);
        assert_eq!(up.degree_shift(), Some(1));
    }

    #[test]
    fn harmonic_diagonal() {
        let b = enumerate_basis(3, 3).unwrap();
        let h = build_harmonic(&b);
        assert_eq!(h.get(0, 0), 1.5);
        let p = b.position_of(&[1, 1, 0]).unwrap();
        assert_eq!(h.get(p, p), 3.5);
    }

    #[test]
    fn angular_momentum_examples() {
        let b = enumerate_basis(2, 8).unwrap();
        let l = build_angular_momentum(&b, 0, 1).unwrap();
        assert_eq!(apply_unit(&l, &[0, 0]).norm(), 0.0);
        let out = apply_unit(&l, &[1, 0]);
        assert!((out.get(&[0, 1]) + 1.0).abs() < 1e-15);
        assert!(l.preserves_degree());
        assert!(l.add(&l.transpose()).unwrap().max_abs() < 1e-15);
        assert!(build_angular_momentum(&b, 1, 1).is_err());
        assert!(build_angular_momentum(&b, 1, 0).is_err());
    }

    #[test]
    fn laplace_beltrami_examples() {
        let b = enumerate_basis(3, 4).unwrap();
        let ls = build_laplace_beltrami(&b).unwrap();
        assert_eq!(apply_unit(&ls, &[0, 0, 0]).norm(), 0.0);
        let out = apply_unit(&ls, &[1, 0, 0]);
        assert!((out.get(&[1, 0, 0]) + 2.0).abs() < 1e-14);

        let b = enumerate_basis(2, 4).unwrap();
        let ls = build_laplace_beltrami(&b).unwrap();
        let mut g = CoeffVector::zeros(b.clone());
        g.set(&[2, 0], 1.0).unwrap();
        g.set(&[0, 2], -1.0).unwrap();
        let out = ls.apply(&g).unwrap();
        assert!(out.sub(&g.scaled(-4.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn linearized_examples() {
        for d in [2usize, 3] {
            let b = enumerate_basis(d, 4).unwrap();
            let l = build_linearized_landau(&b).unwrap();
            let mut zero = vec![0u32; d];
            assert!(apply_unit(&l, &zero).max_abs() < 1e-14);
            zero[0] = 1;
            assert!(apply_unit(&l, &zero).max_abs() < 1e-14);
            let mut e12 = vec![0u32; d];
            e12[0] = 1;
            e12[1] = 1;
            let out = apply_unit(&l, &e12);
            let expect = CoeffVector::unit(b.clone(), &e12).unwrap().scaled(4.0 * d as f64);
            assert!(out.sub(&expect).unwrap().max_abs() < 1e-13);
        }
        let b = enumerate_basis(2, 1).unwrap();
        assert!(matches!(
            build_linearized_landau(&b),
            Err(OperatorError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn reduced_generator_on_energy_direction() {
        let b = enumerate_basis(2, 4).unwrap();
        let k = build_reduced_generator(&b).unwrap();
        let mut g = CoeffVector::zeros(b.clone());
        g.set(&[2, 0], 1.0).unwrap();
        g.set(&[0, 2], 1.0).unwrap();
        let out = k.apply(&g).unwrap();
        // radial level-2 direction: (d−1)·2
        assert!(out.sub(&g.scaled(2.0)).unwrap().max_abs() < 1e-14);
    }
}
