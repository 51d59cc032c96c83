//! Eigenmap embedding followed by orthogonal Procrustes alignment to `B`,
//! and the least-squares eigenmap baseline.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet};
use crate::linalg::{
    orthonormalize_columns, small_svd, smallest_eigenpairs, EigenOptions, EigenPairs, LinearOperator, StiefelPoint,
};
use crate::problem::{decode, encode_labels, PartitionedProblem, Prediction, StiefelQuadratic};

#[derive(Debug, Clone)]
pub struct AlignedEmbedding {
    /// `X Q`, feasible.
    pub x: StiefelPoint,
    /// `q x k` with orthonormal columns (orthogonal when `q = k`).
    pub q: DMatrix<f64>,
    /// Singular values of `X^T B`, descending.
    pub sigma: Vec<f64>,
}

/// The `k` smallest nontrivial eigenvectors of the graph Laplacian.
pub fn eigenmap_embed(g: &Graph, k: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = g.n_vertices();
    let ones = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    smallest_eigenpairs(&g.laplacian(), k, &[ones], opts)
}

/// The `q` smallest eigenpairs of `P L_U P` on the mean-zero subspace.
pub fn problem_eigenmap(prob: &PartitionedProblem, q: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    smallest_eigenpairs(prob.operator(), q, &prob.operator().null_vectors(), opts)
}

/// `Q = U_B V_B^T` from the thin SVD of `X^T B`; returns `X Q`.
pub fn procrustes_align(x: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<AlignedEmbedding> {
    align(x, b, false)
}

/// Like [`procrustes_align`], but a rank-deficient `X^T B` is accepted: the
/// singular vectors of the zero singular values are replaced by
/// deterministic orthonormal completions. Every completion attains the same
/// alignment objective `tr(D_B)`.
pub fn procrustes_align_completed(x: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<AlignedEmbedding> {
    align(x, b, true)
}

fn align(x: &DMatrix<f64>, b: &DMatrix<f64>, complete: bool) -> Result<AlignedEmbedding> {
    if x.nrows() != b.nrows() || x.ncols() < b.ncols() {
        return Err(Error::invalid(format!(
            "cannot align a {}x{} embedding to a {}x{} target",
            x.nrows(),
            x.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let m = x.transpose() * b;
    let (u, s, v) = small_svd(&m);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let q = if b.ncols() == 0 || smin > tol {
        u * v.transpose()
    } else if complete {
        let r = s.iter().filter(|&&v| v > tol).count();
        let ur = u.columns(0, r).into_owned();
        let vr = v.columns(0, r).into_owned();
        let (uc, _) = orthonormalize_columns(&DMatrix::identity(m.nrows(), m.nrows()), Some(&ur), 1e-8);
        let (vc, _) = orthonormalize_columns(&DMatrix::identity(m.ncols(), m.ncols()), Some(&vr), 1e-8);
        let extra = m.ncols() - r;
        &ur * vr.transpose() + uc.columns(0, extra) * vc.columns(0, extra).transpose()
    } else {
        return Err(Error::RankDeficient { what: "X^T B in Procrustes alignment", sigma_min: smin });
    };
    Ok(AlignedEmbedding { x: StiefelPoint::new_unchecked(x * &q), q, sigma: s.iter().copied().collect() })
}

#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub aligned: AlignedEmbedding,
    /// `X Q C^{1/2}`.
    pub x_scaled: DMatrix<f64>,
    pub prediction: Prediction,
    /// Eigenpairs of `P L_U P` that were used (possibly more than `k`).
    pub eigen: EigenPairs,
    /// The alignment needed a completed polar factor.
    pub completed: bool,
}

/// Eigenmap of `P L_U P`, aligned to `B`, rescaled and decoded. When `X^T B`
/// is rank deficient the embedding is widened by one eigenvector at a time,
/// up to `k + 2`; if that does not help (for instance when `B` itself has
/// low rank) the `k`-column alignment is completed deterministically and
/// `completed` is set.
pub fn approx_solve(prob: &PartitionedProblem, opts: &EigenOptions) -> Result<ApproxSolution> {
    let k = prob.k();
    let n = prob.n();
    let max_q = (k + 2).min(n.saturating_sub(1)).max(k);
    let widest = problem_eigenmap(prob, max_q, opts)?;
    for q in k..=max_q {
        let x = widest.vectors.columns(0, q).into_owned();
        match procrustes_align(&x, prob.b()) {
            Ok(aligned) => return Ok(finish(prob, aligned, truncate(&widest, q), false)),
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let x = widest.vectors.columns(0, k).into_owned();
    let aligned = procrustes_align_completed(&x, prob.b())?;
    Ok(finish(prob, aligned, truncate(&widest, k), true))
}

fn truncate(e: &EigenPairs, q: usize) -> EigenPairs {
    EigenPairs {
        values: e.values[..q].to_vec(),
        vectors: e.vectors.columns(0, q).into_owned(),
        deflated: e.deflated.clone(),
        residuals: e.residuals[..q.min(e.residuals.len())].to_vec(),
        iterations: e.iterations,
    }
}

fn finish(prob: &PartitionedProblem, aligned: AlignedEmbedding, eigen: EigenPairs, completed: bool) -> ApproxSolution {
    let x_scaled = aligned.x.matrix() * prob.c_half();
    let prediction = decode(prob, &x_scaled);
    ApproxSolution { aligned, x_scaled, prediction, eigen, completed }
}

/// Least-squares regression of the labels on eigenmap coordinates:
/// `Q = pinv(X_lab) Y_l`, predictions `X Q` with labeled rows restored.
pub fn le_ssl_baseline(x_eig: &DMatrix<f64>, labels: &LabelSet) -> Result<Prediction> {
    let y_l = encode_labels(labels);
    let q = le_ssl_coefficients(x_eig, labels)?;
    let mut scores = x_eig * q;
    for (a, v) in labels.vertices().enumerate() {
        scores.set_row(v, &y_l.row(a));
    }
    Ok(Prediction::from_scores(scores))
}

/// Minimum-norm least-squares coefficients of the labeled rows.
pub fn le_ssl_coefficients(x_eig: &DMatrix<f64>, labels: &LabelSet) -> Result<DMatrix<f64>> {
    let y_l = encode_labels(labels);
    let mut x_lab = DMatrix::zeros(labels.len(), x_eig.ncols());
    for (a, v) in labels.vertices().enumerate() {
        if v >= x_eig.nrows() {
            return Err(Error::invalid(format!("labeled vertex {v} out of range")));
        }
        x_lab.set_row(a, &x_eig.row(v));
    }
    let pinv = x_lab.pseudo_inverse(1e-12).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pinv * y_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_barbell;
    use crate::linalg::{random_orthogonal, random_stiefel, small_sym_eig};
    use crate::problem::{assemble, objective, DenseProblem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spd_target_gives_identity() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[2.0, 0.5, 0.5, 1.0, 3.0, 3.0]);
        let a = procrustes_align(&x, &b).unwrap();
        assert!((a.q - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn completed_alignment_attains_nuclear_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_stiefel(6, 2, &mut rng).into_matrix();
        let h = DMatrix::from_fn(6, 1, |i, _| i as f64 - 2.5);
        let b = DMatrix::from_fn(6, 2, |i, j| if j == 0 { h[i] } else { -h[i] });
        let a = procrustes_align_completed(&x, &b).unwrap();
        assert!((a.q.transpose() * &a.q - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((a.x.matrix().dot(&b) - a.sigma.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn rotation_target_recovers_rotation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let a = procrustes_align(&x, &rot).unwrap();
        assert!((a.q - rot).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_target_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(procrustes_align(&x, &b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn alignment_is_optimal_and_cone_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_stiefel(9, 3, &mut rng).into_matrix();
        let b = DMatrix::from_fn(9, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = procrustes_align(&x, &b).unwrap();
        let best = a.x.matrix().dot(&b);
        assert!((best - a.sigma.iter().sum::<f64>()).abs() < 1e-10);
        for _ in 0..200 {
            let q = random_orthogonal(3, &mut rng);
            assert!((&x * q).dot(&b) <= best + 1e-12);
        }
        let xtb = a.x.matrix().transpose() * &b;
        assert!((&xtb - xtb.transpose()).norm() < 1e-10);
        let (vals, _) = small_sym_eig(&xtb);
        assert!(vals[0] >= -1e-10);
        // aligning again is the identity
        let again = procrustes_align(a.x.matrix(), &b).unwrap();
        assert!((again.q - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn align_step_never_increases_objective_when_c_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = {
            let g = gen_barbell(4).unwrap();
            g.laplacian().to_dense_matrix()
        };
        let b = DMatrix::from_fn(8, 2, |i, j| if (i < 4) == (j == 0) { 1.0 } else { -0.5 });
        let prob = DenseProblem::new(l, b.clone(), DMatrix::identity(2, 2)).unwrap();
        for _ in 0..20 {
            let x = random_stiefel(8, 2, &mut rng).into_matrix();
            let a = procrustes_align(&x, &b).unwrap();
            assert!(objective(&prob, a.x.matrix()) <= objective(&prob, &x) + 1e-12);
            let quad = |y: &DMatrix<f64>| y.dot(&(&prob.l * y));
            assert!((quad(a.x.matrix()) - quad(&x)).abs() < 1e-9);
        }
    }

    #[test]
    fn barbell_alignment_decodes_cliques() {
        let g = gen_barbell(5).unwrap();
        let ls = LabelSet::new(vec![(0, 0), (9, 1)], 2).unwrap();
        let prob = assemble(&g, &ls).unwrap();
        let sol = approx_solve(&prob, &EigenOptions::default()).unwrap();
        let truth: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        assert_eq!(sol.prediction.labels, truth);
        assert!(sol.aligned.x.feasibility_error() < 1e-10);
    }

    #[test]
    fn le_ssl_identity_and_rank_one() {
        // labeled rows orthonormal and targets equal to them
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.3, 0.3, -0.2, 0.1]);
        let ls = LabelSet::new(vec![(0, 0), (1, 1)], 2).unwrap();
        let q = le_ssl_coefficients(&x, &ls).unwrap();
        assert!((q - DMatrix::identity(2, 2)).norm() < 1e-12);
        // a single label yields a rank-one map
        let ls = LabelSet::new(vec![(2, 1)], 2).unwrap();
        let q = le_ssl_coefficients(&x, &ls).unwrap();
        let (_, s, _) = small_svd(&q);
        assert!(s[1].abs() < 1e-12 && s[0] > 0.0);
        // closed form: x_l^T / |x_l|^2 e_1^T
        let xl = x.row(2).transpose();
        let expect = &xl * DMatrix::from_row_slice(1, 2, &[0.0, 1.0]) / xl.norm_squared();
        assert!((le_ssl_coefficients(&x, &ls).unwrap() - expect).norm() < 1e-12);
    }

    #[test]
    fn le_ssl_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_stiefel(12, 3, &mut rng).into_matrix();
        let ls = LabelSet::new(vec![(0, 0), (3, 1), (5, 2), (7, 0), (9, 1)], 3).unwrap();
        let q = le_ssl_coefficients(&x, &ls).unwrap();
        let idx = [0, 3, 5, 7, 9];
        let xl = DMatrix::from_fn(5, 3, |a, j| x[(idx[a], j)]);
        let yl = encode_labels(&ls);
        let normal = (xl.transpose() * &xl).lu().solve(&(xl.transpose() * yl)).unwrap();
        assert!((q - normal).norm() < 1e-10);
    }

    #[test]
    fn eigenmap_is_mean_zero_and_orthonormal() {
        let g = gen_barbell(5).unwrap();
        let e = eigenmap_embed(&g, 2, &EigenOptions::default()).unwrap();
        assert!(crate::linalg::feasibility_error(&e.vectors) < 1e-10);
        for j in 0..2 {
            assert!(e.vectors.column(j).sum().abs() < 1e-10);
        }
        let f = e.vectors.column(0);
        for i in 0..5 {
            assert!(f[i] * f[i + 5] < 0.0);
        }
    }
}
