//! Truncated tensor Hermite basis.
//!
//! The basis functions are `Ψ_α(v) = Π_j ψ_{α_j}(v_j)` with `ψ_n` the Hermite
//! functions normalized for the weight `e^{-x²/4}`. A [`BasisTruncation`] keeps
//! every multi-index of total degree at most `N`, ordered by degree first and
//! lexicographically (ascending on `α_1, …, α_d`) inside each degree. Degree
//! slices are therefore contiguous, and level projections are range operations.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("level {level} outside 0..={max_degree}")]
    LevelOutOfRange { level: usize, max_degree: usize },
    #[error("coefficient vector has length {got}, basis has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("multi-index {0:?} is not part of the truncation")]
    UnknownIndex(Vec<u32>),
    #[error("coefficient vectors live on different bases")]
    BasisMismatch,
}

/// A multi-index `α ∈ ℕ^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Box<[u32]>);

impl MultiIndex {
    pub fn new(entries: impl Into<Box<[u32]>>) -> Self {
        MultiIndex(entries.into())
    }

    /// `(0, …, 0)` in dimension `d`.
    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d].into())
    }

    /// `e_axis`, scaled by `times`.
    pub fn unit(d: usize, axis: usize, times: u32) -> Self {
        let mut e = vec![0; d];
        e[axis] = times;
        MultiIndex(e.into())
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|α|`.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `α + shift·e_axis`, or `None` if an entry would go negative.
    pub fn shifted(&self, axis: usize, shift: i32) -> Option<MultiIndex> {
        let mut e = self.0.clone();
        let v = e[axis] as i64 + shift as i64;
        if v < 0 {
            return None;
        }
        e[axis] = v as u32;
        Some(MultiIndex(e))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(e: &[u32]) -> Self {
        MultiIndex(e.into())
    }
}

impl<const D: usize> From<[u32; D]> for MultiIndex {
    fn from(e: [u32; D]) -> Self {
        MultiIndex(e.to_vec().into())
    }
}

/// `binomial(n, k)` for the small arguments that occur in basis counting.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Every multi-index of total degree `≤ max_degree` in graded-lex order.
#[derive(Clone)]
pub struct BasisTruncation {
    dimension: usize,
    max_degree: usize,
    ordering: Vec<MultiIndex>,
    level_offsets: Vec<usize>,
    lookup: HashMap<MultiIndex, usize>,
}

impl fmt::Debug for BasisTruncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisTruncation")
            .field("dimension", &self.dimension)
            .field("max_degree", &self.max_degree)
            .field("len", &self.ordering.len())
            .finish()
    }
}

impl PartialEq for BasisTruncation {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.max_degree == other.max_degree
    }
}

/// Enumerate the truncated basis for dimension `d` and maximal degree `n`.
pub fn enumerate_basis(d: usize, n: usize) -> Result<Arc<BasisTruncation>, BasisError> {
    BasisTruncation::new(d, n).map(Arc::new)
}

fn push_compositions(total: usize, d: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if d == 1 {
        prefix.push(total as u32);
        out.push(MultiIndex::new(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first as u32);
        push_compositions(total - first, d - 1, prefix, out);
        prefix.pop();
    }
}

impl BasisTruncation {
    pub fn new(d: usize, n: usize) -> Result<Self, BasisError> {
        if d < 2 {
            return Err(BasisError::Dimension(d));
        }
        let mut ordering = Vec::with_capacity(binomial(n + d, d));
        let mut level_offsets = Vec::with_capacity(n + 2);
        let mut prefix = Vec::with_capacity(d);
        for k in 0..=n {
            level_offsets.push(ordering.len());
            push_compositions(k, d, &mut prefix, &mut ordering);
        }
        level_offsets.push(ordering.len());
        let lookup = ordering.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Ok(BasisTruncation {
            dimension: d,
            max_degree: n,
            ordering,
            level_offsets,
            lookup,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn ordering(&self) -> &[MultiIndex] {
        &self.ordering
    }

    pub fn index(&self, position: usize) -> &MultiIndex {
        &self.ordering[position]
    }

    /// Position of `alpha` in the ordering.
    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn position_of(&self, entries: &[u32]) -> Option<usize> {
        self.lookup.get(&MultiIndex::from(entries)).copied()
    }

    /// Degree of the basis function stored at `position`.
    pub fn degree_at(&self, position: usize) -> usize {
        // level_offsets is sorted; the degree is the last level starting at or before position.
        self.level_offsets.partition_point(|&o| o <= position) - 1
    }

    /// Positions occupied by level `k` (the space `ℰ_k`).
    pub fn level_range(&self, k: usize) -> Result<Range<usize>, BasisError> {
        if k > self.max_degree {
            return Err(BasisError::LevelOutOfRange {
                level: k,
                max_degree: self.max_degree,
            });
        }
        Ok(self.level_offsets[k]..self.level_offsets[k + 1])
    }

    /// Positions of all levels `≤ n`.
    pub fn cumulative_range(&self, n: usize) -> Result<Range<usize>, BasisError> {
        if n > self.max_degree {
            return Err(BasisError::LevelOutOfRange {
                level: n,
                max_degree: self.max_degree,
            });
        }
        Ok(0..self.level_offsets[n + 1])
    }

    /// Ordering as plain integer tuples, for manifests.
    pub fn ordering_tuples(&self) -> Vec<Vec<u32>> {
        self.ordering.iter().map(|a| a.entries().to_vec()).collect()
    }
}

/// Hermite coefficients `c_α = (g, Ψ_α)` of a fluctuation on a truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector {
    basis: Arc<BasisTruncation>,
    values: Vec<f64>,
}

impl CoeffVector {
    pub fn new(basis: Arc<BasisTruncation>, values: Vec<f64>) -> Result<Self, BasisError> {
        if values.len() != basis.len() {
            return Err(BasisError::LengthMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(CoeffVector { basis, values })
    }

    pub fn zeros(basis: Arc<BasisTruncation>) -> Self {
        let values = vec![0.0; basis.len()];
        CoeffVector { basis, values }
    }

    /// `Ψ_α` itself.
    pub fn unit(basis: Arc<BasisTruncation>, alpha: &[u32]) -> Result<Self, BasisError> {
        let mut c = CoeffVector::zeros(basis);
        c.set(alpha, 1.0)?;
        Ok(c)
    }

    /// Build from `(multi-index, value)` pairs; repeated indices accumulate.
    pub fn from_entries<'a>(
        basis: Arc<BasisTruncation>,
        entries: impl IntoIterator<Item = (&'a [u32], f64)>,
    ) -> Result<Self, BasisError> {
        let mut c = CoeffVector::zeros(basis);
        for (alpha, value) in entries {
            let p = c.position_checked(alpha)?;
            c.values[p] += value;
        }
        Ok(c)
    }

    fn position_checked(&self, alpha: &[u32]) -> Result<usize, BasisError> {
        if alpha.len() != self.basis.dimension() {
            return Err(BasisError::UnknownIndex(alpha.to_vec()));
        }
        self.basis
            .position_of(alpha)
            .ok_or_else(|| BasisError::UnknownIndex(alpha.to_vec()))
    }

    pub fn basis(&self) -> &Arc<BasisTruncation> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coefficient at `alpha`; zero if `alpha` lies outside the truncation.
    pub fn get(&self, alpha: &[u32]) -> f64 {
        self.basis
            .position_of(alpha)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn set(&mut self, alpha: &[u32], value: f64) -> Result<(), BasisError> {
        let p = self.position_checked(alpha)?;
        self.values[p] = value;
        Ok(())
    }

    /// L² norm, which is the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &CoeffVector) -> Result<f64, BasisError> {
        self.check_same_basis(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_same_basis(&self, other: &CoeffVector) -> Result<(), BasisError> {
        if self.basis != other.basis {
            return Err(BasisError::BasisMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> CoeffVector {
        CoeffVector {
            basis: self.basis.clone(),
            values: self.values.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: f64, other: &CoeffVector) -> Result<(), BasisError> {
        self.check_same_basis(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &CoeffVector) -> Result<CoeffVector, BasisError> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Coefficients of level `k` as a slice.
    pub fn level_slice(&self, k: usize) -> Result<&[f64], BasisError> {
        let r = self.basis.level_range(k)?;
        Ok(&self.values[r])
    }

    /// `‖ℙ_k g‖` for every level `k = 0..=N`.
    pub fn level_norms(&self) -> Vec<f64> {
        (0..=self.basis.max_degree())
            .map(|k| {
                let r = self.basis.level_offsets[k]..self.basis.level_offsets[k + 1];
                self.values[r].iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .collect()
    }

    /// `ℙ_k g`: zero every coefficient whose degree differs from `k`.
    pub fn project_level(&self, k: usize) -> Result<CoeffVector, BasisError> {
        let r = self.basis.level_range(k)?;
        Ok(self.keep_range(r))
    }

    /// `S_n g = Σ_{k ≤ n} ℙ_k g`.
    pub fn project_cumulative(&self, n: usize) -> Result<CoeffVector, BasisError> {
        let r = self.basis.cumulative_range(n)?;
        Ok(self.keep_range(r))
    }

    fn keep_range(&self, r: Range<usize>) -> CoeffVector {
        let mut values = vec![0.0; self.values.len()];
        values[r.clone()].copy_from_slice(&self.values[r]);
        CoeffVector {
            basis: self.basis.clone(),
            values,
        }
    }

    /// Re-express on another truncation of the same dimension: shared
    /// indices are copied, indices beyond the target degree are dropped.
    pub fn restrict_to(&self, target: Arc<BasisTruncation>) -> Result<CoeffVector, BasisError> {
        if target.dimension() != self.basis.dimension() {
            return Err(BasisError::BasisMismatch);
        }
        let mut out = CoeffVector::zeros(target.clone());
        for (alpha, &v) in self.basis.ordering().iter().zip(&self.values) {
            if let Some(p) = target.position(alpha) {
                out.values[p] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuples(b: &BasisTruncation) -> Vec<Vec<u32>> {
        b.ordering_tuples()
    }

    #[test]
    fn graded_lex_ordering_d2_n2() {
        let b = enumerate_basis(2, 2).unwrap();
        assert_eq!(
            tuples(&b),
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0]
            ]
        );
        assert_eq!(b.len(), 6);
    }

    #[test]
    fn counts_match_binomials() {
        assert_eq!(enumerate_basis(3, 1).unwrap().len(), 4);
        let b = enumerate_basis(2, 10).unwrap();
        assert_eq!(b.level_range(10).unwrap().len(), 11);
        for d in 2..=4 {
            for n in 0..=9 {
                let b = enumerate_basis(d, n).unwrap();
                assert_eq!(b.len(), binomial(n + d, d));
                for k in 0..=n {
                    assert_eq!(b.level_range(k).unwrap().len(), binomial(k + d - 1, d - 1));
                }
            }
        }
    }

    #[test]
    fn rejects_low_dimension() {
        assert_eq!(enumerate_basis(1, 3).unwrap_err(), BasisError::Dimension(1));
        assert!(enumerate_basis(0, 3).is_err());
    }

    #[test]
    fn ordering_is_deterministic_and_consistent() {
        let a = enumerate_basis(3, 6).unwrap();
        let b = enumerate_basis(3, 6).unwrap();
        assert_eq!(a.ordering(), b.ordering());
        for (p, alpha) in a.ordering().iter().enumerate() {
            assert_eq!(a.position(alpha), Some(p));
            assert_eq!(a.degree_at(p), alpha.degree());
        }
        // degree ascending, lex ascending within a degree
        for w in a.ordering().windows(2) {
            assert!((w[0].degree(), w[0].entries()) < (w[1].degree(), w[1].entries()));
        }
    }

    #[test]
    fn level_projection_examples() {
        let b = enumerate_basis(2, 4).unwrap();
        let c = CoeffVector::unit(b.clone(), &[1, 1]).unwrap();
        assert_eq!(c.project_level(2).unwrap(), c);
        assert_eq!(c.project_level(1).unwrap().norm(), 0.0);
        assert!(matches!(
            c.project_level(5),
            Err(BasisError::LevelOutOfRange { level: 5, .. })
        ));
    }

    #[test]
    fn cumulative_projection_examples() {
        let b = enumerate_basis(2, 4).unwrap();
        let values: Vec<f64> = (0..b.len()).map(|i| (i as f64).sin() + 0.5).collect();
        let c = CoeffVector::new(b.clone(), values).unwrap();
        assert_eq!(c.project_cumulative(4).unwrap(), c);
        let s0 = c.project_cumulative(0).unwrap();
        assert_eq!(s0.values()[0], c.values()[0]);
        assert!(s0.values()[1..].iter().all(|&x| x == 0.0));
        assert!(c.project_cumulative(7).is_err());
    }

    #[test]
    fn unknown_index_and_length_errors() {
        let b = enumerate_basis(2, 2).unwrap();
        assert!(CoeffVector::unit(b.clone(), &[3, 0]).is_err());
        assert!(CoeffVector::unit(b.clone(), &[0, 0, 0]).is_err());
        assert!(CoeffVector::new(b, vec![0.0; 5]).is_err());
    }

    #[test]
    fn restriction_keeps_shared_modes() {
        let big = enumerate_basis(2, 6).unwrap();
        let small = enumerate_basis(2, 3).unwrap();
        let mut c = CoeffVector::zeros(big);
        c.set(&[1, 2], 0.5).unwrap();
        c.set(&[4, 1], 0.25).unwrap();
        let r = c.restrict_to(small).unwrap();
        assert_eq!(r.get(&[1, 2]), 0.5);
        assert_eq!(r.norm(), 0.5);
    }

    #[test]
    fn multi_index_helpers() {
        let a = MultiIndex::from([2, 0, 1]);
        assert_eq!(a.degree(), 3);
        assert_eq!(a.to_string(), "(2,0,1)");
        assert_eq!(a.shifted(1, -1), None);
        assert_eq!(a.shifted(0, -2), Some(MultiIndex::from([0, 0, 1])));
        assert_eq!(MultiIndex::unit(3, 2, 2), MultiIndex::from([0, 0, 2]));
    }
}
