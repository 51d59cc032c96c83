//! Subspace assembly and the reduced dense problem.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pgd::{pgd_armijo, ArmijoConfig, PgdConfig};
use crate::linalg::dense::{project_out, sym};
use crate::linalg::{orthonormalize_columns, random_stiefel, small_sym_eig, StiefelPoint};
use crate::problem::{DenseProblem, StiefelQuadratic};
use crate::procrustes::procrustes_align_completed;

/// Relative norm below which a candidate column is dropped.
pub const DROP_TOL: f64 = 1e-8;

/// Orthonormal basis of `span(X, Z, u, g)` with `X` first, every column
/// kept orthogonal to `constraints`. Returns the basis and how many
/// candidate columns were dropped as dependent.
pub fn build_subspace(
    x: &DMatrix<f64>,
    extra: &[&DMatrix<f64>],
    constraints: &[DVector<f64>],
) -> (DMatrix<f64>, usize) {
    let n = x.nrows();
    let total: usize = x.ncols() + extra.iter().map(|m| m.ncols()).sum::<usize>();
    let mut s = DMatrix::zeros(n, total);
    s.columns_mut(0, x.ncols()).copy_from(x);
    let mut at = x.ncols();
    for m in extra {
        s.columns_mut(at, m.ncols()).copy_from(*m);
        at += m.ncols();
    }
    project_out(&mut s, constraints);
    let (v, dropped) = orthonormalize_columns(&s, None, DROP_TOL);
    (v, dropped)
}

#[derive(Debug, Clone)]
pub struct ReducedSolve {
    /// Reduced minimizer, `d x k`.
    pub x: StiefelPoint,
    pub value: f64,
    pub inner_iters: usize,
    /// `V^T L V`.
    pub l_reduced: DMatrix<f64>,
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct ReducedOptions {
    pub armijo: ArmijoConfig,
    pub max_iter: usize,
    pub foc_tol: f64,
    /// Additional random starts besides the warm start and the aligned
    /// Ritz start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        ReducedOptions { armijo: ArmijoConfig::default(), max_iter: 200, foc_tol: 1e-10, restarts: 4, seed: 0 }
    }
}

/// The dense problem `min F(Y; V^T L V, V^T B)` over `St(d, k)`.
pub fn reduced_problem<P: StiefelQuadratic + ?Sized>(prob: &P, v: &DMatrix<f64>) -> DenseProblem {
    let lv = prob.apply_l(v);
    let l = sym(&(v.transpose() * lv));
    let b = v.transpose() * prob.b();
    DenseProblem::with_sqrt(l, b, prob.c().clone(), prob.c_half().clone())
}

/// Solves the reduced problem from the warm start `V^T X`, from the Ritz
/// vectors of `V^T L V` aligned to `V^T B`, and from seeded random points,
/// keeping the lowest objective. The warm start result never exceeds the
/// warm start value, so the outcome does not either.
pub fn solve_subspace<P: StiefelQuadratic + ?Sized>(
    prob: &P,
    v: &DMatrix<f64>,
    x_warm: &DMatrix<f64>,
    opts: &ReducedOptions,
) -> ReducedSolve {
    let red = reduced_problem(prob, v);
    let d = v.ncols();
    let k = prob.k();
    let cfg = PgdConfig {
        armijo: opts.armijo.clone(),
        max_iter: opts.max_iter,
        foc_tol: opts.foc_tol,
        bb: true,
        newton: true,
        ..Default::default()
    };

    let mut starts = Vec::new();
    let warm = v.transpose() * x_warm;
    starts.push(crate::linalg::stiefel_project(&warm).map(|s| s.into_matrix()).unwrap_or(warm));
    if d > k {
        let (_, vecs) = small_sym_eig(&red.l);
        let ritz = vecs.columns(0, k).into_owned();
        if let Ok(a) = procrustes_align_completed(&ritz, &red.b) {
            starts.push(a.x.into_matrix());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            starts.push(random_stiefel(d, k, &mut rng).into_matrix());
        }
    }

    let mut best: Option<ReducedSolve> = None;
    let mut inner = 0;
    for s in starts {
        let out = pgd_armijo(&red, &s, &cfg);
        inner += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => out.value < b.value - 1e-14 * b.value.abs().max(1.0),
        };
        if better {
            best = Some(ReducedSolve {
                x: out.x,
                value: out.value,
                inner_iters: 0,
                l_reduced: DMatrix::zeros(0, 0),
                stalled: out.stalled,
            });
        }
    }
    let mut best = best.expect("at least the warm start is solved");
    best.inner_iters = inner;
    best.l_reduced = red.l;
    best
}
