//! Projected, shifted pseudoinverse solves `(P L P - s P)^+ P b` with
//! `P = I - X X^T`.

use nalgebra::{DMatrix, DVector};

use super::cg::{cg_solve, CgOptions, Preconditioner};
use super::sparse::LinearOperator;
use crate::error::Result;

/// Solves `(P L P - shift P) o = P rhs` with `X^T o = 0`, where
/// `P = I - X X^T` and `basis_x` has orthonormal columns.
///
/// Null vectors of `L` that are orthogonal to `basis_x` are also kept out of
/// the solution, which makes the result the minimum-norm (pseudoinverse)
/// solution. An indefinite shifted operator surfaces as
/// [`crate::Error::IndefiniteOperator`].
pub fn projected_shifted_pinv_apply<A: LinearOperator + ?Sized>(
    l: &A,
    basis_x: &DMatrix<f64>,
    shift: f64,
    rhs: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let deflation = deflation_set(l, basis_x);
    solve_deflated(l, deflation, shift, rhs, tol)
}

/// Same solve with the deflation set given explicitly: the columns of
/// `basis_x` plus the orthonormal vectors in `extra` (orthogonalized
/// against `basis_x` here).
pub fn projected_shifted_pinv_apply_with<A: LinearOperator + ?Sized>(
    l: &A,
    basis_x: &DMatrix<f64>,
    extra: &[DVector<f64>],
    shift: f64,
    rhs: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let mut deflation: Vec<DVector<f64>> = basis_x.column_iter().map(|c| c.into_owned()).collect();
    push_orthogonal(&mut deflation, extra.iter().cloned());
    solve_deflated(l, deflation, shift, rhs, tol)
}

fn solve_deflated<A: LinearOperator + ?Sized>(
    l: &A,
    deflation: Vec<DVector<f64>>,
    shift: f64,
    rhs: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let opts = CgOptions { tol, max_iter: 20 * l.dim().max(50), precond: Preconditioner::Jacobi, shift, deflation };
    let rep = cg_solve(l, rhs.as_slice(), &opts)?;
    Ok(DVector::from_vec(rep.x))
}

pub(crate) fn deflation_set<A: LinearOperator + ?Sized>(l: &A, basis_x: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = basis_x.column_iter().map(|c| c.into_owned()).collect();
    let null = l.null_vectors().into_iter().filter(|q| (basis_x.transpose() * q).norm() < 1e-8);
    push_orthogonal(&mut out, null);
    out
}

fn push_orthogonal(out: &mut Vec<DVector<f64>>, vs: impl Iterator<Item = DVector<f64>>) {
    for q in vs {
        let mut v = q;
        for _ in 0..2 {
            for b in out.iter() {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            out.push(v / nv);
        }
    }
}
