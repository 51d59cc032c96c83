//! Smallest eigenpairs of symmetric positive semidefinite operators.
//!
//! Three routes share one entry point:
//!
//! * `Dense` materializes the operator and calls a dense symmetric solver.
//!   Deflated directions are lifted above the spectrum so they are never
//!   returned.
//! * `Lobpcg` is a locally optimal block preconditioned CG iteration with an
//!   explicitly orthonormalized `[X, W, P]` basis and Jacobi preconditioning.
//! * `ShiftInvert` is block inverse subspace iteration, each step solving
//!   `(A + sigma I) Y = X` by deflated CG, followed by Rayleigh-Ritz.
//!
//! `Auto` uses the dense route for small dimensions and LOBPCG otherwise.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cg::{cg_solve, CgOptions, Preconditioner};
use super::dense::{fix_column_signs, orthonormalize_columns, project_out, random_stiefel, small_sym_eig};
use super::ichol::IncompleteCholesky;
use super::sparse::LinearOperator;
use crate::error::{Error, Result};

/// Dimension at or below which `Auto` solves densely.
pub const DENSE_CUTOFF: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lobpcg,
    ShiftInvert,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Residual target `||A v - d v|| <= tol * ||A||`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: EigenMethod,
    /// Extra block vectors beyond the `k` requested.
    pub guard: usize,
    pub seed: u64,
    /// Optional warm start; columns are orthonormalized internally.
    pub initial: Option<DMatrix<f64>>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, max_iter: 2000, method: EigenMethod::Auto, guard: 4, seed: 0x5eed, initial: None }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, sign-normalized.
    pub vectors: DMatrix<f64>,
    /// The excluded null-space vectors.
    pub deflated: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// The `k` smallest eigenpairs of `a` orthogonal to `deflate`.
pub fn smallest_eigenpairs<A: LinearOperator + ?Sized>(
    a: &A,
    k: usize,
    deflate: &[DVector<f64>],
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = a.dim();
    if k == 0 {
        return Err(Error::invalid("requested zero eigenpairs"));
    }
    if k + deflate.len() > n {
        return Err(Error::invalid(format!(
            "cannot compute {k} eigenpairs of a {n}-dimensional operator with {} deflated vectors",
            deflate.len()
        )));
    }
    let deflate = orthonormal_set(deflate);
    let method = match opts.method {
        EigenMethod::Auto if n <= DENSE_CUTOFF => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Lobpcg,
        m => m,
    };
    // iterative routes need room for the guard block
    let method = if method != EigenMethod::Dense && k + deflate.len() + 1 >= n { EigenMethod::Dense } else { method };
    let mut pairs = match method {
        EigenMethod::Dense => dense_route(a, k, &deflate)?,
        EigenMethod::Lobpcg => lobpcg(a, k, &deflate, opts)?,
        EigenMethod::ShiftInvert => shift_invert(a, k, &deflate, opts)?,
        EigenMethod::Auto => unreachable!(),
    };
    fix_column_signs(&mut pairs.vectors);
    pairs.residuals = residual_norms(a, &pairs.values, &pairs.vectors, &deflate);
    pairs.deflated = deflate;
    Ok(pairs)
}

fn orthonormal_set(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    if vs.is_empty() {
        return Vec::new();
    }
    let n = vs[0].len();
    let mut m = DMatrix::zeros(n, vs.len());
    for (j, v) in vs.iter().enumerate() {
        m.set_column(j, v);
    }
    let (q, _) = orthonormalize_columns(&m, None, 1e-12);
    q.column_iter().map(|c| c.into_owned()).collect()
}

fn residual_norms<A: LinearOperator + ?Sized>(
    a: &A,
    values: &[f64],
    vectors: &DMatrix<f64>,
    deflate: &[DVector<f64>],
) -> Vec<f64> {
    let mut av = a.apply_block(vectors);
    project_out(&mut av, deflate);
    (0..values.len()).map(|j| (av.column(j) - vectors.column(j) * values[j]).norm()).collect()
}

fn dense_route<A: LinearOperator + ?Sized>(a: &A, k: usize, deflate: &[DVector<f64>]) -> Result<EigenPairs> {
    let n = a.dim();
    let mut m = a.to_dense();
    if !deflate.is_empty() {
        let mut q = DMatrix::zeros(n, deflate.len());
        for (j, v) in deflate.iter().enumerate() {
            q.set_column(j, v);
        }
        let p = DMatrix::identity(n, n) - &q * q.transpose();
        let lift = 2.0 * a.norm_estimate().max(1.0) + 1.0;
        m = &p * m * &p + (&q * q.transpose()) * lift;
    }
    let (vals, vecs) = small_sym_eig(&m);
    Ok(EigenPairs {
        values: vals.iter().take(k).copied().collect(),
        vectors: vecs.columns(0, k).into_owned(),
        deflated: Vec::new(),
        residuals: Vec::new(),
        iterations: 1,
    })
}

fn initial_block(n: usize, b: usize, deflate: &[DVector<f64>], opts: &EigenOptions) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = random_stiefel(n, b, &mut rng).into_matrix();
    if let Some(init) = &opts.initial {
        let c = init.ncols().min(b);
        for j in 0..c {
            x.set_column(j, &init.column(j));
        }
    }
    project_out(&mut x, deflate);
    let (q, _) = orthonormalize_columns(&x, None, 1e-10);
    q
}

/// Rayleigh-Ritz on an orthonormal basis `s` with `as_ = A s`; returns the
/// `b` smallest Ritz values and coefficient matrix.
fn rayleigh_ritz(s: &DMatrix<f64>, as_: &DMatrix<f64>, b: usize) -> (Vec<f64>, DMatrix<f64>) {
    let h = s.transpose() * as_;
    let (vals, vecs) = small_sym_eig(&h);
    let b = b.min(vals.len());
    (vals.iter().take(b).copied().collect(), vecs.columns(0, b).into_owned())
}

fn converged_count(
    x: &DMatrix<f64>,
    ax: &DMatrix<f64>,
    theta: &[f64],
    k: usize,
    thresh: f64,
) -> (usize, Vec<f64>, DMatrix<f64>) {
    let mut r = ax.clone();
    for j in 0..theta.len() {
        let mut col = r.column_mut(j);
        col.axpy(-theta[j], &x.column(j), 1.0);
    }
    let norms: Vec<f64> = (0..theta.len()).map(|j| r.column(j).norm()).collect();
    let ok = norms.iter().take(k).filter(|&&v| v <= thresh).count();
    (ok, norms, r)
}

fn lobpcg<A: LinearOperator + ?Sized>(
    a: &A,
    k: usize,
    deflate: &[DVector<f64>],
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = a.dim();
    let b = (k + opts.guard).min(n - deflate.len());
    let scale = a.norm_estimate().max(f64::MIN_POSITIVE);
    let thresh = opts.tol * scale;
    let ichol = a.as_csr().and_then(|m| IncompleteCholesky::new(m).ok());
    let inv_diag: Option<Vec<f64>> =
        a.diagonal().map(|d| d.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect());

    let mut x = initial_block(n, b, deflate, opts);
    let mut ax = a.apply_block(&x);
    project_out(&mut ax, deflate);
    let (theta, coef) = rayleigh_ritz(&x, &ax, b);
    x = &x * &coef;
    ax = &ax * &coef;
    let mut theta = theta;
    let mut p: Option<DMatrix<f64>> = None;
    let mut last_norms = Vec::new();

    for it in 0..opts.max_iter {
        let (ok, norms, r) = converged_count(&x, &ax, &theta, k, thresh);
        last_norms = norms;
        if ok == k {
            return Ok(EigenPairs {
                values: theta[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                deflated: Vec::new(),
                residuals: Vec::new(),
                iterations: it,
            });
        }
        // preconditioned residuals for unconverged columns only (soft locking)
        let active: Vec<usize> = (0..x.ncols()).filter(|&j| last_norms[j] > thresh).collect();
        let mut w = DMatrix::zeros(n, active.len());
        for (c, &j) in active.iter().enumerate() {
            let mut col = r.column(j).into_owned();
            if let Some(ic) = &ichol {
                ic.solve_in_place(col.as_mut_slice());
            } else if let Some(d) = &inv_diag {
                col.iter_mut().zip(d).for_each(|(v, di)| *v *= di);
            }
            w.set_column(c, &col);
        }
        project_out(&mut w, deflate);

        let mut extra = w;
        if let Some(pm) = &p {
            let mut joined = DMatrix::zeros(n, extra.ncols() + pm.ncols());
            joined.columns_mut(0, extra.ncols()).copy_from(&extra);
            joined.columns_mut(extra.ncols(), pm.ncols()).copy_from(pm);
            extra = joined;
        }
        let (extra_q, _) = orthonormalize_columns(&extra, Some(&x), 1e-10);
        let mut a_extra = a.apply_block(&extra_q);
        project_out(&mut a_extra, deflate);

        let nb = x.ncols();
        let ne = extra_q.ncols();
        let mut s = DMatrix::zeros(n, nb + ne);
        s.columns_mut(0, nb).copy_from(&x);
        s.columns_mut(nb, ne).copy_from(&extra_q);
        let mut as_ = DMatrix::zeros(n, nb + ne);
        as_.columns_mut(0, nb).copy_from(&ax);
        as_.columns_mut(nb, ne).copy_from(&a_extra);

        let (new_theta, c) = rayleigh_ritz(&s, &as_, nb);
        let c_extra = c.rows(nb, ne).into_owned();
        p = if ne > 0 { Some(&extra_q * &c_extra) } else { None };
        x = &s * &c;
        ax = &as_ * &c;
        theta = new_theta;
        // keep the block clean against drift
        project_out(&mut x, deflate);
    }
    Err(Error::EigenNotConverged { residuals: last_norms.into_iter().take(k).collect(), iterations: opts.max_iter })
}

fn shift_invert<A: LinearOperator + ?Sized>(
    a: &A,
    k: usize,
    deflate: &[DVector<f64>],
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = a.dim();
    let b = (k + opts.guard).min(n - deflate.len());
    let scale = a.norm_estimate().max(f64::MIN_POSITIVE);
    let thresh = opts.tol * scale;
    // tiny negative shift keeps the inner systems definite when `a` has an
    // undeflated null space
    let sigma = -1e-10 * scale;
    let cg = CgOptions {
        tol: (opts.tol * 1e-2).max(1e-14),
        max_iter: 20 * n.max(100),
        precond: Preconditioner::Jacobi,
        shift: sigma,
        deflation: deflate.to_vec(),
    };

    let mut x = initial_block(n, b, deflate, opts);
    let mut last_norms = Vec::new();
    for it in 0..opts.max_iter {
        let mut ax = a.apply_block(&x);
        project_out(&mut ax, deflate);
        let (theta, coef) = rayleigh_ritz(&x, &ax, x.ncols());
        x = &x * &coef;
        ax = &ax * &coef;
        let (ok, norms, _) = converged_count(&x, &ax, &theta, k, thresh);
        last_norms = norms;
        if ok == k {
            return Ok(EigenPairs {
                values: theta[..k].to_vec(),
                vectors: x.columns(0, k).into_owned(),
                deflated: Vec::new(),
                residuals: Vec::new(),
                iterations: it,
            });
        }
        let mut y = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let rep = cg_solve(a, &col, &cg)?;
            y.set_column(j, &DVector::from_vec(rep.x));
        }
        project_out(&mut y, deflate);
        let (q, _) = orthonormalize_columns(&y, None, 1e-12);
        if q.ncols() < k {
            return Err(Error::EigenNotConverged {
                residuals: last_norms.into_iter().take(k).collect(),
                iterations: it,
            });
        }
        x = q;
    }
    Err(Error::EigenNotConverged { residuals: last_norms.into_iter().take(k).collect(), iterations: opts.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::CsrMatrix;

    fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut t = Vec::new();
        for &(i, j, w) in edges {
            t.push((i, j, -w));
            t.push((j, i, -w));
            t.push((i, i, w));
            t.push((j, j, w));
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    fn ones(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    }

    #[test]
    fn three_path_fiedler_pair() {
        let l = laplacian_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let e = smallest_eigenpairs(&l, 1, &[ones(3)], &EigenOptions::default()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        let s = 1.0 / 2f64.sqrt();
        let v = e.vectors.column(0);
        assert!((v[0] - s).abs() < 1e-10 && v[1].abs() < 1e-10 && (v[2] + s).abs() < 1e-10);
    }

    #[test]
    fn two_vertex_edge() {
        let l = laplacian_from_edges(2, &[(0, 1, 1.0)]);
        let e = smallest_eigenpairs(&l, 1, &[ones(2)], &EigenOptions::default()).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        let s = 1.0 / 2f64.sqrt();
        assert!((e.vectors[(0, 0)] - s).abs() < 1e-12 && (e.vectors[(1, 0)] + s).abs() < 1e-12);
    }

    #[test]
    fn iterative_routes_match_dense_on_grid() {
        // 12x12 grid Laplacian
        let side = 12;
        let n = side * side;
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                if c + 1 < side {
                    edges.push((i, i + 1, 1.0 + ((i % 3) as f64) * 0.1));
                }
                if r + 1 < side {
                    edges.push((i, i + side, 1.0));
                }
            }
        }
        let l = laplacian_from_edges(n, &edges);
        let dense =
            smallest_eigenpairs(&l, 4, &[ones(n)], &EigenOptions { method: EigenMethod::Dense, ..Default::default() })
                .unwrap();
        for method in [EigenMethod::Lobpcg, EigenMethod::ShiftInvert] {
            let it = smallest_eigenpairs(&l, 4, &[ones(n)], &EigenOptions { method, ..Default::default() }).unwrap();
            for j in 0..4 {
                assert!(
                    (it.values[j] - dense.values[j]).abs() < 1e-8,
                    "{method:?} value {j}: {} vs {}",
                    it.values[j],
                    dense.values[j]
                );
            }
            assert!(it.residuals.iter().all(|&r| r <= 1e-8 * l.inf_norm() * 1.01));
            // vectors orthogonal to the constant
            for j in 0..4 {
                assert!(it.vectors.column(j).sum().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dense_route_never_returns_deflated_direction() {
        // two components: second zero eigenvalue must still be found
        let l = laplacian_from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let e = smallest_eigenpairs(&l, 1, &[ones(4)], &EigenOptions::default()).unwrap();
        assert!(e.values[0].abs() < 1e-12);
        let v = e.vectors.column(0);
        assert!((v[0] - v[1]).abs() < 1e-10 && (v[2] - v[3]).abs() < 1e-10);
        assert!((v[0] + v[2]).abs() < 1e-10);
    }

    #[test]
    fn too_many_pairs_rejected() {
        let l = laplacian_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert!(smallest_eigenpairs(&l, 3, &[ones(3)], &EigenOptions::default()).is_err());
    }
}
