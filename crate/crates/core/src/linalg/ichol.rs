//! Zero-fill incomplete Cholesky factor `A ~ L L^T` on the sparsity pattern
//! of `A`, used to precondition eigensolves on grounded Laplacians.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    /// Strictly lower entries of `L` by row, columns ascending.
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    diag: Vec<f64>,
}

impl IncompleteCholesky {
    /// Fails with `NotPositiveDefinite` when a pivot is not safely positive,
    /// as happens for singular Laplacians.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let start = indices.len();
            let mut a_ii = 0.0;
            for (j, v) in a.row(i) {
                if j < i {
                    indices.push(j);
                    data.push(v);
                } else if j == i {
                    a_ii = v;
                }
            }
            for p in start..indices.len() {
                let j = indices[p];
                // sparse dot of the computed parts of rows i and j
                let (mut q, qend) = (indptr[j], indptr[j + 1]);
                let mut s = 0.0;
                for r in start..p {
                    let c = indices[r];
                    while q < qend && indices[q] < c {
                        q += 1;
                    }
                    if q < qend && indices[q] == c {
                        s += data[r] * data[q];
                    }
                }
                data[p] = (data[p] - s) / diag[j];
            }
            let sq: f64 = data[start..].iter().map(|v| v * v).sum();
            let pivot = a_ii - sq;
            if !(pivot > 1e-12 * a_ii.abs().max(f64::MIN_POSITIVE)) {
                return Err(Error::NotPositiveDefinite { what: "incomplete Cholesky pivot", min_eig: pivot });
            }
            diag[i] = pivot.sqrt();
            indptr.push(indices.len());
        }
        Ok(IncompleteCholesky { indptr, indices, data, diag })
    }

    /// Overwrites `x` with `(L L^T)^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = x[i];
            for p in self.indptr[i]..self.indptr[i + 1] {
                s -= self.data[p] * x[self.indices[p]];
            }
            x[i] = s / self.diag[i];
        }
        for i in (0..n).rev() {
            x[i] /= self.diag[i];
            let xi = x[i];
            for p in self.indptr[i]..self.indptr[i + 1] {
                x[self.indices[p]] -= self.data[p] * xi;
            }
        }
    }
}
