//! The supervised spectral problem on the Stiefel manifold.
//!
//! With labeled rows `X_l` fixed, the unlabeled block `X_U` of a balanced,
//! centered embedding is written as `X_U = Y C^{1/2} - 1 r^T / n` with `Y`
//! on the mean-zero Stiefel manifold. Up to a constant and a factor of two
//! the Laplacian energy becomes
//!
//! `F(Y) = 1/2 <Y, L Y C> - <Y, B C^{1/2}>`,
//!
//! with `L = P L_U P`, `P = I - 11^T/n`, `C = p I - X_l^T X_l - r r^T / n`,
//! `r = X_l^T 1` and `B = P (L_U 1 r^T / n - L_Ul X_l)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{grounded_blocks, Graph, GroundedBlocks, LabelSet};
use crate::linalg::dense::sym;
use crate::linalg::sparse::center_columns;
use crate::linalg::{
    cg_solve, small_svd, small_sym_eig, sqrt_and_invsqrt, stiefel_project, CgOptions, CsrMatrix, DenseOperator,
    EigenPairs, LinearOperator, MeanZeroProjected, Preconditioner, StiefelPoint,
};

/// A quadratic objective `1/2 <X, L X C> - <X, B C^{1/2}>` over
/// `{X in St(n, k) : X^T q = 0 for q in constraints}`.
pub trait StiefelQuadratic: Sync {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    /// The operator `L`.
    fn operator(&self) -> &dyn LinearOperator;
    /// `L X` for an `n x k` block.
    fn apply_l(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.operator().apply_block(x)
    }
    fn b(&self) -> &DMatrix<f64>;
    fn c(&self) -> &DMatrix<f64>;
    fn c_half(&self) -> &DMatrix<f64>;
    /// Orthonormal vectors every feasible column is orthogonal to.
    fn constraints(&self) -> Vec<DVector<f64>> {
        Vec::new()
    }
    /// `B C^{1/2}`, cached by implementors that evaluate it often.
    fn b_c_half(&self) -> DMatrix<f64> {
        self.b() * self.c_half()
    }
}

/// Objective and gradient evaluated together.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DMatrix<f64>,
}

pub fn evaluate<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> Evaluation {
    let lx = prob.apply_l(x);
    let lxc = &lx * prob.c();
    let bch = prob.b_c_half();
    let value = 0.5 * x.dot(&lxc) - x.dot(&bch);
    Evaluation { value, gradient: lxc - bch }
}

pub fn objective<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> f64 {
    evaluate(prob, x).value
}

/// Euclidean gradient `L X C - B C^{1/2}`.
pub fn gradient<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> DMatrix<f64> {
    evaluate(prob, x).gradient
}

/// Symmetrized least-squares multiplier `sym(X^T g)`.
pub fn multiplier_estimate<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> DMatrix<f64> {
    sym(&(x.transpose() * gradient(prob, x)))
}

/// `||L X C - B C^{1/2} - X Lambda||_F` with the symmetrized multiplier.
pub fn foc_residual<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> f64 {
    foc_from_gradient(x, &gradient(prob, x))
}

pub fn foc_from_gradient(x: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let lam = sym(&(x.transpose() * g));
    (g - x * lam).norm()
}

/// Projects onto the feasible set: removes constraint directions, then the
/// nearest Stiefel point.
pub fn project_feasible<P: StiefelQuadratic + ?Sized>(prob: &P, x: &DMatrix<f64>) -> Result<StiefelPoint> {
    let mut y = x.clone();
    crate::linalg::dense::project_out(&mut y, &prob.constraints());
    stiefel_project(&y)
}

/// Haar-like random feasible point.
pub fn random_feasible<P: StiefelQuadratic + ?Sized, R: Rng + ?Sized>(prob: &P, rng: &mut R) -> StiefelPoint {
    loop {
        let g = DMatrix::from_fn(prob.n(), prob.k(), |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        if let Ok(x) = project_feasible(prob, &g) {
            return x;
        }
    }
}

/// Dense instance of the quadratic, used for reduced subspace problems and
/// as an oracle in tests.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    op: DenseOperator,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_half: DMatrix<f64>,
    pub constraints: Vec<DVector<f64>>,
    bch: DMatrix<f64>,
}

impl DenseProblem {
    pub fn new(l: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (c_half, _) = sqrt_and_invsqrt(&c)?;
        Ok(Self::with_sqrt(l, b, c, c_half))
    }

    pub fn with_sqrt(l: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, c_half: DMatrix<f64>) -> Self {
        let bch = &b * &c_half;
        let l = sym(&l);
        DenseProblem { op: DenseOperator::new(l.clone()), l, b, c, c_half, constraints: Vec::new(), bch }
    }

    pub fn with_constraints(mut self, constraints: Vec<DVector<f64>>) -> Self {
        self.constraints = constraints;
        self
    }
}

impl StiefelQuadratic for DenseProblem {
    fn n(&self) -> usize {
        self.l.nrows()
    }
    fn k(&self) -> usize {
        self.b.ncols()
    }
    fn operator(&self) -> &dyn LinearOperator {
        &self.op
    }
    fn apply_l(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.l * x
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn c_half(&self) -> &DMatrix<f64> {
        &self.c_half
    }
    fn constraints(&self) -> Vec<DVector<f64>> {
        self.constraints.clone()
    }
    fn b_c_half(&self) -> DMatrix<f64> {
        self.bch.clone()
    }
}

/// One-hot rows `e_{y_i}` in label-set order.
pub fn encode_labels(labels: &LabelSet) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(labels.len(), labels.num_classes());
    for (a, &(_, c)) in labels.entries().iter().enumerate() {
        x[(a, c)] = 1.0;
    }
    x
}

/// Grounded blocks plus every quantity of the rescaled problem.
#[derive(Debug, Clone)]
pub struct PartitionedProblem {
    pub blocks: GroundedBlocks,
    op: MeanZeroProjected<CsrMatrix>,
    pub labels: LabelSet,
    pub x_l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_u: DMatrix<f64>,
    pub c_half: DMatrix<f64>,
    pub c_invhalf: DMatrix<f64>,
    pub r: DVector<f64>,
    pub p: f64,
    pub p_tilde: f64,
    pub n_total: usize,
    bch: DMatrix<f64>,
}

/// Builds the rescaled problem for `g` with supervision `labels`.
pub fn assemble(g: &Graph, labels: &LabelSet) -> Result<PartitionedProblem> {
    let blocks = grounded_blocks(g, labels)?;
    let big_m = g.n_vertices();
    let k = labels.num_classes();
    let n = blocks.n_unlabeled();
    let m = labels.len();
    let p = big_m as f64 / k as f64;
    let p_tilde = m as f64 / k as f64;

    let x_l = encode_labels(labels);
    let r = DVector::from_iterator(k, x_l.column_iter().map(|c| c.sum()));
    let c_u = DMatrix::identity(k, k) * p - x_l.transpose() * &x_l;
    let c = &c_u - &r * r.transpose() / n as f64;
    let c = sym(&c);
    let (c_half, c_invhalf) = sqrt_and_invsqrt(&c).map_err(|_| {
        let (vals, _) = small_sym_eig(&c);
        Error::LabelBudget { min_eig: vals[0], p, p_tilde }
    })?;

    // B = P (L_U 1 r^T / n - L_Ul X_l)
    let ones = vec![1.0; n];
    let mut lu1 = vec![0.0; n];
    blocks.l_u.matvec(&ones, &mut lu1);
    let lu1 = DVector::from_vec(lu1);
    let mut b = &lu1 * r.transpose() / n as f64 - blocks.l_ul.mul_dense(&x_l);
    center_columns(&mut b);

    let op = MeanZeroProjected::new(blocks.l_u.clone());
    let bch = &b * &c_half;
    Ok(PartitionedProblem {
        blocks,
        op,
        labels: labels.clone(),
        x_l,
        b,
        c,
        c_u,
        c_half,
        c_invhalf,
        r,
        p,
        p_tilde,
        n_total: big_m,
        bch,
    })
}

impl PartitionedProblem {
    /// The operator `L = P L_U P`.
    pub fn operator(&self) -> &MeanZeroProjected<CsrMatrix> {
        &self.op
    }

    pub fn n_unlabeled(&self) -> usize {
        self.blocks.n_unlabeled()
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    /// Replaces `B` (re-centered); used to build synthetic instances.
    pub fn with_b(mut self, mut b: DMatrix<f64>) -> Result<Self> {
        if b.shape() != self.b.shape() {
            return Err(Error::invalid("replacement B has the wrong shape"));
        }
        center_columns(&mut b);
        self.bch = &b * &self.c_half;
        self.b = b;
        Ok(self)
    }

    /// `X_U = X_scaled - 1 r^T / n`, the unlabeled block of the embedding.
    pub fn uncenter(&self, x_scaled: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_unlabeled() as f64;
        let mut x = x_scaled.clone();
        for j in 0..x.ncols() {
            let s = self.r[j] / n;
            x.column_mut(j).add_scalar_mut(-s);
        }
        x
    }

    /// Laplacian energy `<X_0, L X_0>` of the full embedding assembled from
    /// `X_l` and the unlabeled block `x_u`.
    pub fn full_energy(&self, g: &Graph, x_u: &DMatrix<f64>) -> f64 {
        let x0 = self.full_embedding(x_u);
        let lx = g.laplacian().mul_dense(&x0);
        x0.dot(&lx)
    }

    /// Full `M x k` matrix with labeled rows from `X_l`.
    pub fn full_embedding(&self, x_u: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.num_classes();
        let mut x0 = DMatrix::zeros(self.n_total, k);
        for (a, &v) in self.blocks.labeled.iter().enumerate() {
            x0.set_row(v, &self.x_l.row(a));
        }
        for (a, &v) in self.blocks.unlabeled.iter().enumerate() {
            x0.set_row(v, &x_u.row(a));
        }
        x0
    }
}

impl StiefelQuadratic for PartitionedProblem {
    fn n(&self) -> usize {
        self.n_unlabeled()
    }
    fn k(&self) -> usize {
        self.num_classes()
    }
    fn operator(&self) -> &dyn LinearOperator {
        &self.op
    }
    fn apply_l(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.op.apply_block(x)
    }
    fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn c_half(&self) -> &DMatrix<f64> {
        &self.c_half
    }
    fn constraints(&self) -> Vec<DVector<f64>> {
        self.op.null_vectors()
    }
    fn b_c_half(&self) -> DMatrix<f64> {
        self.bch.clone()
    }
}

/// Per-vertex class scores and the decoded labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Prediction {
    /// Labels from row-wise argmax, lowest class on ties.
    pub fn from_scores(scores: DMatrix<f64>) -> Self {
        let labels = (0..scores.nrows()).map(|i| argmax_row(&scores, i)).collect();
        Prediction { scores, labels }
    }

    /// Fraction of vertices with `mask[i]` whose label matches `truth`.
    pub fn accuracy(&self, truth: &[usize], mask: &[bool]) -> f64 {
        let (mut hit, mut tot) = (0usize, 0usize);
        for i in 0..self.labels.len() {
            if mask[i] {
                tot += 1;
                hit += usize::from(self.labels[i] == truth[i]);
            }
        }
        if tot == 0 {
            1.0
        } else {
            hit as f64 / tot as f64
        }
    }

    /// Accuracy restricted to each true class, over `mask`.
    pub fn per_class_accuracy(&self, truth: &[usize], mask: &[bool], k: usize) -> Vec<f64> {
        let mut hit = vec![0usize; k];
        let mut tot = vec![0usize; k];
        for i in 0..self.labels.len() {
            if mask[i] && truth[i] < k {
                tot[truth[i]] += 1;
                hit[truth[i]] += usize::from(self.labels[i] == truth[i]);
            }
        }
        hit.iter().zip(&tot).map(|(&h, &t)| if t == 0 { 1.0 } else { h as f64 / t as f64 }).collect()
    }
}

pub(crate) fn argmax_row(s: &DMatrix<f64>, i: usize) -> usize {
    let mut best = 0;
    for j in 1..s.ncols() {
        if s[(i, j)] > s[(i, best)] {
            best = j;
        }
    }
    best
}

/// Undoes the centering shift on the rescaled solution and decodes every
/// vertex; labeled vertices keep their given classes.
pub fn decode(prob: &PartitionedProblem, x_scaled: &DMatrix<f64>) -> Prediction {
    let x_u = prob.uncenter(x_scaled);
    Prediction::from_scores(prob.full_embedding(&x_u))
}

/// Harmonic extension `L_U X_U = -L_Ul X_l`, decoded by argmax.
pub fn laplace_learning(g: &Graph, labels: &LabelSet, tol: f64) -> Result<Prediction> {
    let comp = g.components();
    let ncomp = comp.iter().max().map_or(0, |&c| c + 1);
    let mut has_label = vec![false; ncomp];
    for v in labels.vertices() {
        if v >= g.n_vertices() {
            return Err(Error::invalid(format!("labeled vertex {v} out of range")));
        }
        has_label[comp[v]] = true;
    }
    if let Some(c) = has_label.iter().position(|&h| !h) {
        let size = comp.iter().filter(|&&x| x == c).count();
        let example = comp.iter().position(|&x| x == c).unwrap();
        return Err(Error::UnlabeledComponent { component: c, size, example });
    }
    let blocks = grounded_blocks(g, labels)?;
    let x_l = encode_labels(labels);
    let rhs = -blocks.l_ul.mul_dense(&x_l);
    let n = blocks.n_unlabeled();
    let k = labels.num_classes();
    let mut x_u = DMatrix::zeros(n, k);
    let opts =
        CgOptions { tol, max_iter: 50 * n.max(100), precond: Preconditioner::IncompleteCholesky, ..Default::default() };
    for j in 0..k {
        let col: Vec<f64> = rhs.column(j).iter().copied().collect();
        let rep = cg_solve(&blocks.l_u, &col, &opts)?;
        if !rep.converged {
            return Err(Error::EigenNotConverged { residuals: vec![rep.rel_residual], iterations: rep.iterations });
        }
        x_u.set_column(j, &DVector::from_vec(rep.x));
    }
    let mut full = DMatrix::zeros(g.n_vertices(), k);
    for (a, &v) in blocks.labeled.iter().enumerate() {
        full.set_row(v, &x_l.row(a));
    }
    for (a, &v) in blocks.unlabeled.iter().enumerate() {
        full.set_row(v, &x_u.row(a));
    }
    Ok(Prediction::from_scores(full))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    CertifiedGlobal,
    Inconclusive,
}

/// Outcome of the global-optimality test and the numbers behind it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Certificate {
    pub status: CertificateStatus,
    /// `sigma_min(V^T B C^{-1/2})`.
    pub s1: f64,
    pub d1: f64,
    pub dk: f64,
    /// Eigenvalues of `C^{-1/2} Lambda C^{-1/2}`, ascending.
    pub lambda: Vec<f64>,
    pub lambda_max: f64,
    pub foc: f64,
    pub gap_condition: bool,
    pub multiplier_condition: bool,
    /// `C` is not a multiple of the identity.
    pub nonscalar_c: bool,
    /// `k > 2`.
    pub extrapolated: bool,
}

/// Tests a stationary `x` for global optimality.
///
/// With `mu = eig(C^{-1/2} Lambda C^{-1/2})` and `d_1` the smallest
/// eigenvalue of `L` on the feasible subspace, `mu_max < d_1` makes the
/// Lagrangian convex, so a stationary point minimizes it over every feasible
/// point. `s_1 > d_k - d_1` is the sufficient spectral gap condition for
/// that to happen. Both must hold, and the FOC residual must be below
/// `foc_tol`.
pub fn global_certificate<P: StiefelQuadratic + ?Sized>(
    prob: &P,
    x: &DMatrix<f64>,
    eigen: &EigenPairs,
    foc_tol: f64,
    tol: f64,
) -> Result<Certificate> {
    let k = prob.k();
    if eigen.values.len() < k {
        return Err(Error::invalid(format!("certificate needs {k} eigenpairs, got {}", eigen.values.len())));
    }
    let (_, c_invhalf) = sqrt_and_invsqrt(prob.c())?;
    let g = gradient(prob, x);
    let foc = foc_from_gradient(x, &g);
    let lam = sym(&(x.transpose() * &g));
    let (mu, _) = small_sym_eig(&(&c_invhalf * lam * &c_invhalf));
    let lambda: Vec<f64> = mu.iter().copied().collect();
    let lambda_max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v = eigen.vectors.columns(0, k);
    let (_, s, _) = small_svd(&(v.transpose() * prob.b() * &c_invhalf));
    let s1 = s.iter().copied().fold(f64::INFINITY, f64::min);
    let d1 = eigen.values[0];
    let dk = eigen.values[k - 1];
    let gap_condition = s1 > dk - d1 + tol;
    let multiplier_condition = lambda_max < d1 - tol;
    let c = prob.c();
    let cbar = c.trace() / k as f64;
    let nonscalar_c = (c - DMatrix::identity(k, k) * cbar).norm() > 1e-12 * cbar.abs().max(1.0);
    let status = if foc <= foc_tol && gap_condition && multiplier_condition {
        CertificateStatus::CertifiedGlobal
    } else {
        CertificateStatus::Inconclusive
    };
    Ok(Certificate {
        status,
        s1,
        d1,
        dk,
        lambda,
        lambda_max,
        foc,
        gap_condition,
        multiplier_condition,
        nonscalar_c,
        extrapolated: k > 2,
    })
}
