//! Compressed sparse row storage and the matrix-free operator abstraction
//! every solver in the crate is written against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A symmetric linear map `v -> A v` on `R^dim`.
///
/// Solvers only ever call [`LinearOperator::apply`]; the other methods are
/// optional hints used for preconditioning, tolerance scaling and deflation.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Diagonal of the operator, when cheaply available (Jacobi preconditioner).
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }

    /// The stored matrix, for operators that are one (enables IC(0)).
    fn as_csr(&self) -> Option<&CsrMatrix> {
        None
    }

    /// Upper bound (or estimate) of the spectral norm.
    fn norm_estimate(&self) -> f64 {
        power_norm_estimate(self, 30)
    }

    /// Orthonormal vectors known to lie in the null space.
    fn null_vectors(&self) -> Vec<DVector<f64>> {
        Vec::new()
    }

    /// Applies the operator to every column of `x`.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        assert_eq!(x.nrows(), n, "operator/block dimension mismatch");
        let mut out = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let src = &x.as_slice()[j * n..(j + 1) * n];
            let dst = &mut out.as_mut_slice()[j * n..(j + 1) * n];
            self.apply(src, dst);
        }
        out
    }

    /// Dense copy, built column by column. Only meant for small dimensions.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut out.as_mut_slice()[j * n..(j + 1) * n]);
            e[j] = 0.0;
        }
        // remove rounding asymmetry
        let t = out.transpose();
        (out + t) * 0.5
    }
}

fn power_norm_estimate<A: LinearOperator + ?Sized>(op: &A, iters: usize) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-symmetric start vector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 113) as f64 / 113.0).collect();
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..iters {
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut w);
        est = norm(&w);
        std::mem::swap(&mut v, &mut w);
    }
    // power iteration underestimates; pad a little
    est * 1.05
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse matrix in CSR form with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!("entry ({i}, {j}) outside {nrows}x{ncols} matrix")));
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix { nrows, ncols, indptr, indices, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    /// Entry lookup by binary search; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(pos) => self.data[a + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    /// `A * X` for a dense block `X` with `ncols` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            let src = &x.as_slice()[j * self.ncols..(j + 1) * self.ncols];
            let dst = &mut out.as_mut_slice()[j * self.nrows..(j + 1) * self.nrows];
            self.matvec(src, dst);
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self.triplets().map(|(i, j, v)| (j, i, v)).collect::<Vec<_>>();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t).expect("transpose stays in bounds")
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            out[(i, j)] += v;
        }
        out
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm of a
    /// symmetric matrix.
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self.triplets().all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol * v.abs().max(1.0))
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag())
    }

    fn as_csr(&self) -> Option<&CsrMatrix> {
        Some(self)
    }

    fn norm_estimate(&self) -> f64 {
        self.inf_norm()
    }
}

/// Dense symmetric matrix as an operator; used for reduced subspace problems.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    null: Vec<DVector<f64>>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square());
        DenseOperator { matrix, null: Vec::new() }
    }

    pub fn with_null_vectors(mut self, null: Vec<DVector<f64>>) -> Self {
        self.null = null;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum();
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.matrix.diagonal().iter().copied().collect())
    }

    fn norm_estimate(&self) -> f64 {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    fn null_vectors(&self) -> Vec<DVector<f64>> {
        self.null.clone()
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// `P A P` with `P = I - 11^T/n`, the centering projection, applied without
/// materializing `P`.
#[derive(Debug, Clone)]
pub struct MeanZeroProjected<A> {
    inner: A,
}

impl<A: LinearOperator> MeanZeroProjected<A> {
    pub fn new(inner: A) -> Self {
        MeanZeroProjected { inner }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

/// Subtracts the mean from `v` in place.
pub fn center(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Subtracts each column mean of a dense block.
pub fn center_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for j in 0..x.ncols() {
        center(&mut x.as_mut_slice()[j * n..(j + 1) * n]);
    }
}

impl<A: LinearOperator> LinearOperator for MeanZeroProjected<A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut px = x.to_vec();
        center(&mut px);
        self.inner.apply(&px, y);
        center(y);
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        // diag(PAP)_i = A_ii - 2 (A1)_i / n + 1^T A 1 / n^2
        let d = self.inner.diagonal()?;
        let n = self.dim();
        let ones = vec![1.0; n];
        let mut a1 = vec![0.0; n];
        self.inner.apply(&ones, &mut a1);
        let total: f64 = a1.iter().sum();
        let nf = n as f64;
        Some(d.iter().zip(&a1).map(|(dii, ai)| dii - 2.0 * ai / nf + total / (nf * nf)).collect())
    }

    fn norm_estimate(&self) -> f64 {
        self.inner.norm_estimate()
    }

    fn null_vectors(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        if n == 0 {
            return Vec::new();
        }
        vec![DVector::from_element(n, 1.0 / (n as f64).sqrt())]
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        (**self).diagonal()
    }
    fn norm_estimate(&self) -> f64 {
        (**self).norm_estimate()
    }
    fn null_vectors(&self) -> Vec<DVector<f64>> {
        (**self).null_vectors()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_block(x)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        (**self).diagonal()
    }
    fn norm_estimate(&self) -> f64 {
        (**self).norm_estimate()
    }
    fn null_vectors(&self) -> Vec<DVector<f64>> {
        (**self).null_vectors()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_block(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.row_indices(0), &[0, 2]);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn projected_diagonal_matches_dense() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 3.0), (1, 2, -2.0), (2, 1, -2.0), (2, 2, 2.5)],
        )
        .unwrap();
        let p = MeanZeroProjected::new(a);
        let dense = p.to_dense();
        let d = p.diagonal().unwrap();
        for i in 0..3 {
            assert!((dense[(i, i)] - d[i]).abs() < 1e-12);
        }
        // P A P annihilates the constant vector
        let mut y = vec![0.0; 3];
        p.apply(&[1.0, 1.0, 1.0], &mut y);
        assert!(norm(&y) < 1e-14);
    }
}
