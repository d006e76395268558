//! Symmetric sparse operators over interior degrees of freedom and their
//! direct (banded Cholesky) and iterative (conjugate gradient) solvers.

use crate::error::{Result, VmcError};
use crate::scalar::Real;

/// Symmetric positive definite operator stored in CSR form with both
/// triangles present.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpdOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSpdOperator<T> {
    /// Builds the operator from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(VmcError::invalid(format!(
                    "triplet ({i}, {j}) outside a {dim}x{dim} operator"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    let k = values.len() - 1;
                    values[k] += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `scale * I`.
    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![scale; dim],
        }
    }

    pub(crate) fn from_csr_parts(
        dim: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), dim + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Maximum `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.dim {
            for &j in &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]] {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.dim, x.len())?;
        let mut y = vec![T::zero(); self.dim];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `uᵀ A v`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> Result<T> {
        check_len(self.dim, u.len())?;
        check_len(self.dim, v.len())?;
        let mut s = T::zero();
        for (i, &ui) in u.iter().enumerate() {
            let mut row = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * v[self.col_idx[k]];
            }
            s += ui * row;
        }
        Ok(s)
    }

    /// Maximum `|a_ij - a_ji|` relative to the largest entry magnitude.
    pub fn symmetry_defect(&self) -> T {
        let mut scale = T::zero();
        let mut defect = T::zero();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                scale = scale.max(self.values[k].abs());
                defect = defect.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        if scale > T::zero() {
            defect / scale
        } else {
            defect
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().fold(T::zero(), |a, b| a + b)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(VmcError::DimensionMismatch { expected, found })
    }
}

/// Lower-triangular banded Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    dim: usize,
    bw: usize,
    // Row i holds L[i, i-bw ..= i] at offsets 0..=bw.
    band: Vec<T>,
}

/// Reported by [`BandedCholesky::factor`] when a pivot is not positive.
#[derive(Debug, Clone, Copy)]
pub struct PivotFailure {
    pub row: usize,
    pub pivot: f64,
}

impl<T: Real> BandedCholesky<T> {
    /// Factors `A + shift·I`.
    pub fn factor_shifted(
        a: &SparseSpdOperator<T>,
        shift: T,
    ) -> std::result::Result<Self, PivotFailure> {
        let n = a.dim;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![T::zero(); n * w];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    band[i * w + (j + bw - i)] += a.values[k];
                }
            }
            band[i * w + bw] += shift;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in k0..j {
                    s -= band[ri + k] * band[rj + k];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(PivotFailure {
                            row: i,
                            pivot: s.as_f64(),
                        });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { dim: n, bw, band })
    }

    pub fn factor(a: &SparseSpdOperator<T>) -> std::result::Result<Self, PivotFailure> {
        Self::factor_shifted(a, T::zero())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `L[i, j]`.
    pub fn l(&self, i: usize, j: usize) -> T {
        if j > i || i - j > self.bw {
            T::zero()
        } else {
            self.band[i * (self.bw + 1) + (j + self.bw - i)]
        }
    }

    #[inline]
    fn row(&self, i: usize) -> (usize, &[T]) {
        let w = self.bw + 1;
        let j0 = i.saturating_sub(self.bw);
        let off = i * w + (j0 + self.bw - i);
        (j0, &self.band[off..i * w + w])
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        for i in 0..self.dim {
            let (j0, row) = self.row(i);
            let mut s = b[i];
            for (k, &l) in row[..row.len() - 1].iter().enumerate() {
                s -= l * b[j0 + k];
            }
            b[i] = s / row[row.len() - 1];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [T]) {
        for i in (0..self.dim).rev() {
            let (j0, row) = self.row(i);
            let xi = y[i] / row[row.len() - 1];
            y[i] = xi;
            for (k, &l) in row[..row.len() - 1].iter().enumerate() {
                y[j0 + k] -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `Lᵀ u`.
    pub fn mul_upper(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for i in 0..self.dim {
            let (j0, row) = self.row(i);
            let ui = u[i];
            for (k, &l) in row.iter().enumerate() {
                out[j0 + k] += l * ui;
            }
        }
        out
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient<T: Real>(
    a: &SparseSpdOperator<T>,
    b: &[T],
    rel_tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    check_len(a.dim, b.len())?;
    let n = a.dim;
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(x);
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| {
            if d > T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&r, &d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(VmcError::SingularSystem(
                "conjugate gradient met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(VmcError::SingularSystem(format!(
        "conjugate gradient did not converge in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseSpdOperator<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSpdOperator::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a =
            SparseSpdOperator::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(SparseSpdOperator::<f64>::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn cholesky_reproduces_operator() {
        let a = laplace_1d(7);
        let f = BandedCholesky::factor(&a).unwrap();
        let dense = a.to_dense();
        for i in 0..7 {
            for j in 0..7 {
                let s: f64 = (0..7).map(|k| f.l(i, k) * f.l(j, k)).sum();
                assert!((s - dense[(i, j)]).abs() < 1e-14);
            }
        }
        let u: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let lt_u = f.mul_upper(&u);
        let mut back = lt_u.clone();
        f.solve_upper_in_place(&mut back);
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_operator_reports_pivot() {
        let a = SparseSpdOperator::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        )
        .unwrap();
        let err = BandedCholesky::factor(&a).unwrap_err();
        assert_eq!(err.row, 1);
        assert!(err.pivot < 0.0);
    }

    #[test]
    fn cg_matches_direct() {
        let a = laplace_1d(30);
        let b: Vec<f64> = (0..30).map(|i| 1.0 + (i as f64) * 0.1).collect();
        let direct = BandedCholesky::factor(&a).unwrap().solve(&b);
        let cg = conjugate_gradient(&a, &b, 1e-13, 300).unwrap();
        for (x, y) in direct.iter().zip(&cg) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_zero_rhs_is_zero() {
        let a = laplace_1d(5);
        assert_eq!(
            conjugate_gradient(&a, &[0.0; 5], 1e-12, 50).unwrap(),
            vec![0.0; 5]
        );
    }
}
