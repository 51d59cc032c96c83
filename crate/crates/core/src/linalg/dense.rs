//! Small dense factorizations and Stiefel-manifold projections.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest `k` for which the small k x k helpers are intended.
pub const SMALL_DIM_LIMIT: usize = 64;

/// A dense `n x k` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    /// Wraps `x`, checking `||X^T X - I||_F <= tol`.
    pub fn new(x: DMatrix<f64>, tol: f64) -> Result<Self> {
        let err = feasibility_error(&x);
        if !(err <= tol) {
            return Err(Error::invalid(format!("matrix is not on the Stiefel manifold (||X^T X - I|| = {err:.3e})")));
        }
        Ok(StiefelPoint(x))
    }

    /// Wraps without checking. Callers must guarantee orthonormal columns.
    pub fn new_unchecked(x: DMatrix<f64>) -> Self {
        StiefelPoint(x)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn feasibility_error(&self) -> f64 {
        feasibility_error(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for StiefelPoint {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `||X^T X - I||_F`.
pub fn feasibility_error(x: &DMatrix<f64>) -> f64 {
    let g = x.transpose() * x;
    (g - DMatrix::identity(x.ncols(), x.ncols())).norm()
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn small_sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    assert!(m.is_square(), "small_sym_eig needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Thin SVD `M = U diag(s) V^T` with singular values in descending order.
pub fn small_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let r = m.nrows().min(m.ncols());
    if r == 0 {
        return (DMatrix::zeros(m.nrows(), 0), DVector::zeros(0), DMatrix::zeros(m.ncols(), 0));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = DVector::from_iterator(r, order.iter().map(|&i| svd.singular_values[i]));
    let mut u_sorted = DMatrix::zeros(m.nrows(), r);
    let mut v_sorted = DMatrix::zeros(m.ncols(), r);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
    }
    (u_sorted, s, v_sorted)
}

/// `(C^{1/2}, C^{-1/2})` for symmetric positive definite `C`.
pub fn sqrt_and_invsqrt(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = small_sym_eig(c);
    let n = vals.len();
    let max = vals.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min = if n > 0 { vals[0] } else { 1.0 };
    if !(min > 1e-14 * max.max(1e-300)) {
        return Err(Error::NotPositiveDefinite { what: "scaling matrix C", min_eig: min });
    }
    let sq = DVector::from_iterator(n, vals.iter().map(|v| v.sqrt()));
    let isq = DVector::from_iterator(n, vals.iter().map(|v| 1.0 / v.sqrt()));
    let half = &vecs * DMatrix::from_diagonal(&sq) * vecs.transpose();
    let inv_half = &vecs * DMatrix::from_diagonal(&isq) * vecs.transpose();
    Ok(((&half + half.transpose()) * 0.5, (&inv_half + inv_half.transpose()) * 0.5))
}

fn rank_tol(s: &DVector<f64>) -> f64 {
    let smax = s.iter().fold(0.0_f64, |a, &b| a.max(b));
    1e-12 * smax.max(1.0)
}

/// Frobenius-nearest point on the Stiefel manifold, `U V^T` from the thin SVD.
pub fn stiefel_project(x: &DMatrix<f64>) -> Result<StiefelPoint> {
    if x.nrows() < x.ncols() {
        return Err(Error::invalid(format!(
            "cannot project a {}x{} matrix onto St(n, k) with n < k",
            x.nrows(),
            x.ncols()
        )));
    }
    let (u, s, v) = small_svd(x);
    let smin = s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if x.ncols() > 0 && !(smin > rank_tol(&s)) {
        return Err(Error::RankDeficient { what: "Stiefel projection input", sigma_min: smin });
    }
    Ok(StiefelPoint(u * v.transpose()))
}

/// Projection onto `{X in St(n,k) : X^T B symmetric PSD}` by two SVDs:
/// `U1 S1 V1^T = X1`, `U2 S2 V2^T = U1^T B`, result `U1 U2 V2^T`.
pub fn project_onto_cone(x1: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<StiefelPoint> {
    if x1.shape() != b.shape() {
        return Err(Error::invalid("project_onto_cone: X1 and B shapes differ"));
    }
    let (u1, s1, _) = small_svd(x1);
    let s1min = s1.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if x1.ncols() > 0 && !(s1min > rank_tol(&s1)) {
        return Err(Error::RankDeficient { what: "cone projection input X1", sigma_min: s1min });
    }
    let inner = u1.transpose() * b;
    let (u2, s2, v2) = small_svd(&inner);
    let s2min = s2.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if x1.ncols() > 0 && !(s2min > rank_tol(&s2)) {
        return Err(Error::RankDeficient { what: "cone projection U1^T B", sigma_min: s2min });
    }
    Ok(StiefelPoint(u1 * u2 * v2.transpose()))
}

/// Orthonormalizes columns by twice-iterated modified Gram-Schmidt against
/// `against` (assumed orthonormal) and each other, dropping columns whose
/// remaining norm falls below `drop_tol` times their original norm.
pub fn orthonormalize_columns(
    cols: &DMatrix<f64>,
    against: Option<&DMatrix<f64>>,
    drop_tol: f64,
) -> (DMatrix<f64>, usize) {
    let n = cols.nrows();
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(cols.ncols());
    let mut dropped = 0;
    for j in 0..cols.ncols() {
        let mut v: DVector<f64> = cols.column(j).into_owned();
        let orig = v.norm();
        if !(orig > 0.0) || !orig.is_finite() {
            dropped += 1;
            continue;
        }
        for _ in 0..2 {
            if let Some(a) = against {
                for q in a.column_iter() {
                    let c = q.dot(&v);
                    v.axpy(-c, &q, 1.0);
                }
            }
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > drop_tol * orig {
            kept.push(v / nv);
        } else {
            dropped += 1;
        }
    }
    let mut out = DMatrix::zeros(n, kept.len());
    for (j, v) in kept.iter().enumerate() {
        out.set_column(j, v);
    }
    (out, dropped)
}

/// Projects each column of `x` onto the orthogonal complement of the
/// orthonormal vectors in `basis`.
pub fn project_out(x: &mut DMatrix<f64>, basis: &[DVector<f64>]) {
    for j in 0..x.ncols() {
        for q in basis {
            let c = q.dot(&x.column(j));
            let mut col = x.column_mut(j);
            col.axpy(-c, q, 1.0);
        }
    }
}

/// Flips each column so its first entry of significant magnitude is positive.
pub fn fix_column_signs(x: &mut DMatrix<f64>) {
    for j in 0..x.ncols() {
        let maxabs = x.column(j).iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let thresh = 1e-8 * maxabs;
        if let Some(first) = x.column(j).iter().copied().find(|v| v.abs() > thresh) {
            if first < 0.0 {
                x.column_mut(j).neg_mut();
            }
        }
    }
}

/// Haar-distributed point on St(n, k): QR of a Gaussian matrix with the
/// sign of `diag(R)` folded into `Q`.
pub fn random_stiefel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> StiefelPoint {
    assert!(k <= n);
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    StiefelPoint(q)
}

/// Haar-distributed orthogonal k x k matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    random_stiefel(k, k, rng).into_matrix()
}

/// Symmetric part `(A + A^T) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_of_identity_is_identity() {
        let (h, ih) = sqrt_and_invsqrt(&DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(h, DMatrix::identity(3, 3), epsilon = 1e-14);
        assert_relative_eq!(ih, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn two_by_two_closed_form_eigenvalues() {
        // [[a, b], [b, a]] has eigenvalues a - b, a + b
        let c = DMatrix::from_row_slice(2, 2, &[1.75, -0.25, -0.25, 1.75]);
        let (vals, _) = small_sym_eig(&c);
        assert_relative_eq!(vals[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(vals[1], 2.0, epsilon = 1e-14);
        let (h, ih) = sqrt_and_invsqrt(&c).unwrap();
        assert_relative_eq!(&h * &h, c, epsilon = 1e-12);
        assert_relative_eq!(&h * &ih, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn non_spd_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(sqrt_and_invsqrt(&c), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (u, s, v) = small_svd(&m);
            let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
            assert!((rec - &m).norm() <= 1e-12 * m.norm().max(1.0));
            assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn projection_of_scaled_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let p = stiefel_project(&x).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_relative_eq!(p.matrix(), &expected, epsilon = 1e-14);
    }

    #[test]
    fn projection_is_idempotent_on_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_stiefel(7, 3, &mut rng);
        let p = stiefel_project(x.matrix()).unwrap();
        assert!((p.matrix() - x.matrix()).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_projection_errors() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        assert!(matches!(stiefel_project(&x), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn cone_projection_fixed_point_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_stiefel(6, 2, &mut rng).into_matrix();
        // B = X gives X^T B = I
        let p = project_onto_cone(&x, &x).unwrap();
        assert!((p.matrix() - &x).norm() < 1e-12);
        // B = X S with S SPD: X^T B = S already SPD
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = project_onto_cone(&x, &(&x * s)).unwrap();
        assert!((p.matrix() - &x).norm() < 1e-12);
    }

    #[test]
    fn cone_projection_lands_in_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x1 = DMatrix::from_fn(5, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(5, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = project_onto_cone(&x1, &b).unwrap();
            assert!(p.feasibility_error() < 1e-12);
            let xb = p.matrix().transpose() * &b;
            assert!((&xb - xb.transpose()).norm() < 1e-12);
            let (vals, _) = small_sym_eig(&xb);
            assert!(vals[0] >= -1e-12);
        }
    }

    #[test]
    fn gram_schmidt_drops_dependent_columns() {
        let cols = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let (q, dropped) = orthonormalize_columns(&cols, None, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert_eq!(dropped, 1);
        assert!(feasibility_error(&q) < 1e-14);
    }

    #[test]
    fn sign_fix_makes_first_entry_positive() {
        let mut x = DMatrix::from_row_slice(3, 1, &[0.0, -0.6, 0.8]);
        fix_column_signs(&mut x);
        assert!(x[(1, 0)] > 0.0);
    }
}
