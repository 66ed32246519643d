//! Row-compressed real sparse matrices over a [`BasisTruncation`].
//!
//! Column indices are strictly increasing inside each row and exact zeros are
//! never stored, so two assemblies of the same operator produce identical
//! arrays and byte-identical exports.

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::OperatorError;
use crate::basis::{BasisTruncation, CoeffVector};
use crate::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Symmetric,
    General,
}

impl Symmetry {
    fn as_str(self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::General => "general",
        }
    }
}

/// Entrywise tolerance for the symmetric flag.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SparseOperator {
    basis: Arc<BasisTruncation>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseOperator {
    /// Assemble from `(row, col, value)` triplets. Duplicates are summed in
    /// input order, then exact zeros are dropped.
    pub fn from_triplets(
        basis: Arc<BasisTruncation>,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetry: Symmetry,
    ) -> Result<Self, OperatorError> {
        let n = basis.len();
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(OperatorError::EntryOutOfRange { row: r, col: c, dim: n });
        }
        // stable sort keeps the summation order of duplicates reproducible
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let op = SparseOperator {
            basis,
            row_ptr,
            col_idx,
            values,
            symmetry: Symmetry::General,
        };
        match symmetry {
            Symmetry::Symmetric => op.into_symmetric(),
            Symmetry::General => Ok(op),
        }
    }

    /// Diagonal operator with entry `f(position)`.
    pub fn diagonal(basis: Arc<BasisTruncation>, f: impl Fn(usize) -> f64) -> Self {
        let triplets = (0..basis.len()).map(|i| (i, i, f(i))).collect();
        Self::from_triplets(basis, triplets, Symmetry::Symmetric)
            .expect("diagonal operators are symmetric")
    }

    pub fn identity(basis: Arc<BasisTruncation>) -> Self {
        Self::diagonal(basis, |_| 1.0)
    }

    /// Orthogonal projection onto level `k`, as a diagonal matrix.
    pub fn level_projector(basis: Arc<BasisTruncation>, k: usize) -> Result<Self, OperatorError> {
        let r = basis.level_range(k)?;
        Ok(Self::diagonal(basis, |i| if r.contains(&i) { 1.0 } else { 0.0 }))
    }

    /// Flag as symmetric after checking `max|M − Mᵀ| ≤ SYMMETRY_TOL`.
    pub fn into_symmetric(mut self) -> Result<Self, OperatorError> {
        let asym = self.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(OperatorError::NotSymmetric { asymmetry: asym });
        }
        self.symmetry = Symmetry::Symmetric;
        Ok(self)
    }

    pub fn into_general(mut self) -> Self {
        self.symmetry = Symmetry::General;
        self
    }

    pub fn basis(&self) -> &Arc<BasisTruncation> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = M x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *o = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    /// `out += factor · M x`.
    pub fn apply_add_into(&self, factor: f64, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let acc: f64 = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
            *o += factor * acc;
        }
    }

    pub fn apply(&self, x: &CoeffVector) -> Result<CoeffVector, OperatorError> {
        if **x.basis() != *self.basis {
            return Err(OperatorError::BasisMismatch);
        }
        let mut out = CoeffVector::zeros(self.basis.clone());
        self.apply_into(x.values(), out.values_mut());
        Ok(out)
    }

    pub fn transpose(&self) -> SparseOperator {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.basis.clone(), triplets, Symmetry::General)
            .expect("transpose stays in range")
            .with_flag(self.symmetry)
    }

    fn with_flag(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &SparseOperator) -> Result<SparseOperator, OperatorError> {
        self.check_basis(rhs)?;
        let n = self.dim();
        let mut triplets = Vec::new();
        let mut acc = vec![0.0f64; n];
        let mut touched = vec![false; n];
        let mut cols: Vec<usize> = Vec::new();
        for r in 0..n {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                triplets.push((r, c, acc[c]));
                acc[c] = 0.0;
                touched[c] = false;
            }
            cols.clear();
        }
        Self::from_triplets(self.basis.clone(), triplets, Symmetry::General)
    }

    /// `a·self + b·other`; symmetric if both inputs are.
    pub fn lincomb(&self, a: f64, other: &SparseOperator, b: f64) -> Result<SparseOperator, OperatorError> {
        self.check_basis(other)?;
        let triplets = self
            .triplets()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        let flag = if self.symmetry == Symmetry::Symmetric && other.symmetry == Symmetry::Symmetric {
            Symmetry::Symmetric
        } else {
            Symmetry::General
        };
        Ok(Self::from_triplets(self.basis.clone(), triplets, Symmetry::General)?.with_flag(flag))
    }

    pub fn add(&self, other: &SparseOperator) -> Result<SparseOperator, OperatorError> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SparseOperator) -> Result<SparseOperator, OperatorError> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scaled(&self, factor: f64) -> SparseOperator {
        let mut out = self.clone();
        if factor == 0.0 {
            return SparseOperator::from_triplets(self.basis.clone(), Vec::new(), Symmetry::General)
                .expect("empty operator")
                .with_flag(self.symmetry);
        }
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &SparseOperator) -> Result<SparseOperator, OperatorError> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    fn check_basis(&self, other: &SparseOperator) -> Result<(), OperatorError> {
        if *self.basis != *other.basis {
            return Err(OperatorError::BasisMismatch);
        }
        Ok(())
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self − other|` entrywise.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> Result<f64, OperatorError> {
        Ok(self.sub(other)?.max_abs())
    }

    /// `max |M − Mᵀ|` entrywise.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(r, c, _)| r == c)
    }

    /// Diagonal entries.
    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// Common degree shift `|row| − |col|` of all entries, if there is one.
    /// An empty operator reports `Some(0)`.
    pub fn degree_shift(&self) -> Option<i64> {
        let mut shift = None;
        for (r, c, _) in self.triplets() {
            let s = self.basis.degree_at(r) as i64 - self.basis.degree_at(c) as i64;
            match shift {
                None => shift = Some(s),
                Some(s0) if s0 != s => return None,
                _ => {}
            }
        }
        Some(shift.unwrap_or(0))
    }

    pub fn preserves_degree(&self) -> bool {
        self.degree_shift() == Some(0)
    }

    /// Keep only entries whose row and column degrees both satisfy `keep`.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> SparseOperator {
        let triplets = self
            .triplets()
            .filter(|&(r, c, _)| keep(self.basis.degree_at(r)) && keep(self.basis.degree_at(c)))
            .collect();
        Self::from_triplets(self.basis.clone(), triplets, Symmetry::General)
            .expect("restriction stays in range")
            .with_flag(self.symmetry)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Dense block of level `k` (rows and columns of degree `k`).
    pub fn level_block(&self, k: usize) -> Result<DMatrix<f64>, OperatorError> {
        let range = self.basis.level_range(k)?;
        let m = range.len();
        let mut block = DMatrix::zeros(m, m);
        for r in range.clone() {
            for (c, v) in self.row(r) {
                if range.contains(&c) {
                    block[(r - range.start, c - range.start)] = v;
                }
            }
        }
        Ok(block)
    }

    /// Upper bound on the spectral radius: the largest absolute row sum.
    pub fn row_sum_bound(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Plain-text triplet export: a header of `d`, `N`, `symmetry`, `nnz`
    /// lines followed by one `row col value` line per stored entry, values
    /// in 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "d {}", self.basis.dimension())?;
        writeln!(w, "N {}", self.basis.max_degree())?;
        writeln!(w, "symmetry {}", self.symmetry.as_str())?;
        writeln!(w, "nnz {}", self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {}", fmt_f64(v))?;
        }
        Ok(())
    }

    /// Parse the format written by [`write_triplets`](Self::write_triplets).
    pub fn read_triplets<R: BufRead>(reader: R) -> Result<SparseOperator, OperatorError> {
        let bad = |msg: String| OperatorError::Parse(msg);
        let mut lines = reader.lines();
        let mut header = |key: &str| -> Result<String, OperatorError> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` header")))?
                .map_err(|e| bad(e.to_string()))?;
            let mut parts = line.splitn(2, ' ');
            match (parts.next(), parts.next()) {
                (Some(k), Some(v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected `{key}` header, found `{line}`"))),
            }
        };
        let d: usize = header("d")?.parse().map_err(|e| bad(format!("d: {e}")))?;
        let n: usize = header("N")?.parse().map_err(|e| bad(format!("N: {e}")))?;
        let symmetry = match header("symmetry")?.as_str() {
            "symmetric" => Symmetry::Symmetric,
            "general" => Symmetry::General,
            other => return Err(bad(format!("unknown symmetry flag `{other}`"))),
        };
        let nnz: usize = header("nnz")?.parse().map_err(|e| bad(format!("nnz: {e}")))?;
        let basis = Arc::new(BasisTruncation::new(d, n)?);
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("malformed entry `{line}`")));
            }
            let r = f[0].parse().map_err(|e| bad(format!("row: {e}")))?;
            let c = f[1].parse().map_err(|e| bad(format!("col: {e}")))?;
            let v = f[2].parse().map_err(|e| bad(format!("value: {e}")))?;
            triplets.push((r, c, v));
        }
        if triplets.len() != nnz {
            return Err(bad(format!("header declares {nnz} entries, found {}", triplets.len())));
        }
        Ok(Self::from_triplets(basis, triplets, Symmetry::General)?.with_flag(symmetry))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;

    #[test]
    fn triplets_are_sorted_summed_and_pruned() {
        let b = enumerate_basis(2, 1).unwrap();
        let op = SparseOperator::from_triplets(
            b,
            vec![(2, 1, 1.0), (0, 2, 3.0), (2, 1, 0.5), (1, 1, 2.0), (1, 1, -2.0)],
            Symmetry::General,
        )
        .unwrap();
        let t: Vec<_> = op.triplets().collect();
        assert_eq!(t, vec![(0, 2, 3.0), (2, 1, 1.5)]);
        assert_eq!(op.get(2, 1), 1.5);
        assert_eq!(op.get(1, 1), 0.0);
    }

    #[test]
    fn out_of_range_entries_rejected() {
        let b = enumerate_basis(2, 1).unwrap();
        let err = SparseOperator::from_triplets(b, vec![(3, 0, 1.0)], Symmetry::General).unwrap_err();
        assert!(matches!(err, OperatorError::EntryOutOfRange { row: 3, .. }));
    }

    #[test]
    fn symmetric_flag_is_checked() {
        let b = enumerate_basis(2, 1).unwrap();
        let err = SparseOperator::from_triplets(b.clone(), vec![(0, 1, 1.0)], Symmetry::Symmetric).unwrap_err();
        assert!(matches!(err, OperatorError::NotSymmetric { .. }));
        let ok = SparseOperator::from_triplets(b, vec![(0, 1, 1.0), (1, 0, 1.0)], Symmetry::Symmetric).unwrap();
        assert_eq!(ok.symmetry(), Symmetry::Symmetric);
    }

    #[test]
    fn product_matches_dense() {
        let b = enumerate_basis(2, 2).unwrap();
        let n = b.len();
        let a = SparseOperator::from_triplets(
            b.clone(),
            (0..n).map(|i| (i, (i * 5 + 1) % n, 1.0 + i as f64)).collect(),
            Symmetry::General,
        )
        .unwrap();
        let c = SparseOperator::from_triplets(
            b.clone(),
            (0..n).flat_map(|i| [(i, i, 2.0), (i, (i + 1) % n, -1.0)]).collect(),
            Symmetry::General,
        )
        .unwrap();
        let dense = a.to_dense() * c.to_dense();
        let prod = a.matmul(&c).unwrap().to_dense();
        assert!((dense - prod).abs().max() < 1e-15);
        let t = a.transpose();
        assert_eq!(t.to_dense(), a.to_dense().transpose());
    }

    #[test]
    fn triplet_round_trip() {
        let b = enumerate_basis(2, 3).unwrap();
        let op = SparseOperator::diagonal(b, |i| 1.0 / (i as f64 + 3.0));
        let mut buf = Vec::new();
        op.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("d 2\nN 3\nsymmetry symmetric\nnnz 10\n0 0 3.3333333333333331e-1\n"));
        let back = SparseOperator::read_triplets(&buf[..]).unwrap();
        assert_eq!(back.symmetry(), Symmetry::Symmetric);
        assert_eq!(back.max_abs_diff(&op).unwrap(), 0.0);
    }

    #[test]
    fn malformed_triplet_files_rejected() {
        assert!(SparseOperator::read_triplets(&b"d 2\nN 1\n"[..]).is_err());
        assert!(SparseOperator::read_triplets(&b"d 2\nN 1\nsymmetry odd\nnnz 0\n"[..]).is_err());
        assert!(SparseOperator::read_triplets(&b"d 2\nN 1\nsymmetry general\nnnz 2\n0 0 1.0\n"[..]).is_err());
    }
}
