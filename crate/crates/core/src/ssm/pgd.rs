//! Projected gradient descent with Armijo backtracking, plus the dense
//! Riemannian Newton step used to polish small reduced problems.

use nalgebra::DMatrix;

use crate::linalg::dense::{orthonormalize_columns, project_out, sym};
use crate::linalg::{project_onto_cone, stiefel_project, StiefelPoint};
use crate::problem::{evaluate, foc_from_gradient, StiefelQuadratic};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ArmijoConfig {
    /// Initial trial step.
    pub s: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig { s: 1.0, sigma: 1e-4, beta: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct PgdConfig {
    pub armijo: ArmijoConfig,
    pub max_iter: usize,
    pub foc_tol: f64,
    pub max_backtracks: usize,
    /// Project onto `{X : X^T B symmetric PSD}` instead of the plain manifold.
    pub cone: bool,
    /// Start each line search from the Barzilai-Borwein step.
    pub bb: bool,
    /// Try a dense Riemannian Newton step before each gradient step.
    pub newton: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            armijo: ArmijoConfig::default(),
            max_iter: 1000,
            foc_tol: 1e-6,
            max_backtracks: 60,
            cone: false,
            bb: false,
            newton: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub x: StiefelPoint,
    pub value: f64,
    pub foc: f64,
    pub iterations: usize,
    pub obj_history: Vec<f64>,
    pub foc_history: Vec<f64>,
    pub converged: bool,
    /// The line search failed to find a decrease.
    pub stalled: bool,
    pub newton_steps: usize,
}

/// `X_{t+1} = [X_t - alpha_t g_t]_+` with `alpha_t = beta^m s` chosen by the
/// Armijo rule `F(X_{t+1}) <= F(X_t) - sigma alpha_t ||grad F||^2`, where
/// the Riemannian gradient norm equals the FOC residual.
pub fn pgd_armijo<P: StiefelQuadratic + ?Sized>(prob: &P, x0: &DMatrix<f64>, cfg: &PgdConfig) -> PgdOutcome {
    let constraints = prob.constraints();
    let mut x = x0.clone();
    let mut ev = evaluate(prob, &x);
    project_out(&mut ev.gradient, &constraints);
    let mut foc = foc_from_gradient(&x, &ev.gradient);
    let mut obj_history = vec![ev.value];
    let mut foc_history = vec![foc];
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut stalled = false;
    let mut iterations = 0;
    let mut newton_steps = 0;

    while foc > cfg.foc_tol && iterations < cfg.max_iter {
        let rgrad = riemannian_gradient(&x, &ev.gradient);

        let mut step = None;
        if cfg.newton {
            if let Some(z) = newton_direction(prob, &x, &ev.gradient, &constraints) {
                let slope = rgrad.dot(&z);
                if slope < 0.0 {
                    let mut t = 1.0;
                    for _ in 0..8 {
                        let mut trial = &x + &z * t;
                        project_out(&mut trial, &constraints);
                        if let Ok(cand) = stiefel_project(&trial) {
                            let cand = cand.into_matrix();
                            let mut cev = evaluate(prob, &cand);
                            if cev.value <= ev.value + cfg.armijo.sigma * t * slope {
                                project_out(&mut cev.gradient, &constraints);
                                step = Some((cand, cev));
                                newton_steps += 1;
                                break;
                            }
                        }
                        t *= 0.5;
                    }
                }
            }
        }

        if step.is_none() {
            let mut alpha = cfg.armijo.s;
            if cfg.bb {
                if let Some((px, pg)) = &prev {
                    let s = &x - px;
                    let y = &rgrad - pg;
                    let sy = s.dot(&y).abs();
                    if sy > 0.0 {
                        alpha = (s.norm_squared() / sy).clamp(1e-12, 1e12);
                    }
                }
            }
            for _ in 0..=cfg.max_backtracks {
                let mut trial = &x - &ev.gradient * alpha;
                // the retraction divides by singular values that can be
                // small, which amplifies rounding off the constraint set
                project_out(&mut trial, &constraints);
                let proj = if cfg.cone {
                    project_onto_cone(&trial, prob.b()).or_else(|_| stiefel_project(&trial))
                } else {
                    stiefel_project(&trial)
                };
                if let Ok(cand) = proj {
                    let cand = cand.into_matrix();
                    let mut cev = evaluate(prob, &cand);
                    if cev.value <= ev.value - cfg.armijo.sigma * alpha * foc * foc {
                        project_out(&mut cev.gradient, &constraints);
                        step = Some((cand, cev));
                        break;
                    }
                }
                alpha *= cfg.armijo.beta;
            }
        }

        match step {
            Some((nx, nev)) => {
                prev = Some((x, rgrad));
                x = nx;
                ev = nev;
                foc = foc_from_gradient(&x, &ev.gradient);
                iterations += 1;
                obj_history.push(ev.value);
                foc_history.push(foc);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    PgdOutcome {
        x: StiefelPoint::new_unchecked(x),
        value: ev.value,
        foc,
        iterations,
        obj_history,
        foc_history,
        converged: foc <= cfg.foc_tol,
        stalled,
        newton_steps,
    }
}

/// `g - X sym(X^T g)`.
pub fn riemannian_gradient(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - x * sym(&(x.transpose() * g))
}

/// Orthonormal basis of the tangent space at `x` (restricted to the
/// complement of `constraints`): skew rotations `X E_ab` and normal moves
/// `X_perp e_i e_j^T`.
fn tangent_basis(x: &DMatrix<f64>, constraints: &[nalgebra::DVector<f64>]) -> Vec<DMatrix<f64>> {
    let (n, k) = x.shape();
    let mut against = DMatrix::zeros(n, k + constraints.len());
    against.columns_mut(0, k).copy_from(x);
    for (j, c) in constraints.iter().enumerate() {
        against.set_column(k + j, c);
    }
    let (against, _) = orthonormalize_columns(&against, None, 1e-10);
    let (xperp, _) = orthonormalize_columns(&DMatrix::identity(n, n), Some(&against), 1e-8);
    let mut basis = Vec::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..k {
        for b in a + 1..k {
            let mut e = DMatrix::zeros(k, k);
            e[(a, b)] = s;
            e[(b, a)] = -s;
            basis.push(x * e);
        }
    }
    for i in 0..xperp.ncols() {
        for j in 0..k {
            let mut t = DMatrix::zeros(n, k);
            t.set_column(j, &xperp.column(i));
            basis.push(t);
        }
    }
    basis
}

/// Newton direction from the dense Riemannian Hessian
/// `Hess[Z] = P_T(L Z C - Z sym(X^T g))`; `None` when the Hessian is not
/// positive definite on the tangent space.
fn newton_direction<P: StiefelQuadratic + ?Sized>(
    prob: &P,
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    constraints: &[nalgebra::DVector<f64>],
) -> Option<DMatrix<f64>> {
    let basis = tangent_basis(x, constraints);
    let dim = basis.len();
    if dim == 0 || dim > 600 {
        return None;
    }
    let lam = sym(&(x.transpose() * g));
    let rgrad = riemannian_gradient(x, g);
    let hess: Vec<DMatrix<f64>> = basis
        .iter()
        .map(|t| {
            let w = prob.apply_l(t) * prob.c() - t * &lam;
            riemannian_gradient(x, &w)
        })
        .collect();
    let h = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (basis[i].dot(&hess[j]) + basis[j].dot(&hess[i])));
    let rhs = nalgebra::DVector::from_fn(dim, |i, _| -basis[i].dot(&rgrad));
    let chol = h.cholesky()?;
    let xi = chol.solve(&rhs);
    let mut z = DMatrix::zeros(x.nrows(), x.ncols());
    for (c, t) in xi.iter().zip(&basis) {
        z += t * *c;
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_stiefel;
    use crate::problem::{objective, DenseProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DenseProblem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let l = &a * a.transpose();
        let b = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.3..0.3));
        let c = DMatrix::identity(k, k) * 2.0 + &m * m.transpose();
        DenseProblem::new(l, b, c).unwrap()
    }

    #[test]
    fn iterates_stay_on_the_constraint_set() {
        // n = 3 with one constraint leaves a 2-dimensional feasible span,
        // where long runs used to drift off the mean-zero subspace
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ones = nalgebra::DVector::from_element(3, 1.0 / 3f64.sqrt());
        for _ in 0..20 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let p = DMatrix::identity(3, 3) - &ones * ones.transpose();
            let l = &p * (&a * a.transpose()) * &p;
            let b = &p * DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
            let prob =
                DenseProblem::new(l, b, DMatrix::identity(2, 2) * 1.5).unwrap().with_constraints(vec![ones.clone()]);
            let mut x0 = random_stiefel(3, 2, &mut rng).into_matrix();
            project_out(&mut x0, &[ones.clone()]);
            let x0 = stiefel_project(&x0).unwrap().into_matrix();
            let out = pgd_armijo(&prob, &x0, &PgdConfig { max_iter: 300, foc_tol: 1e-12, ..Default::default() });
            assert!((out.x.matrix().transpose() * &ones).norm() < 1e-10);
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        // B = 0, X = eigenvectors, C = I is stationary
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0]));
        let prob = DenseProblem::new(l, DMatrix::zeros(4, 2), DMatrix::identity(2, 2)).unwrap();
        let x = DMatrix::identity(4, 2);
        let out = pgd_armijo(&prob, &x, &PgdConfig::default());
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn objective_is_monotone_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let prob = random_problem(7, 2, &mut rng);
            let x0 = random_stiefel(7, 2, &mut rng).into_matrix();
            let out = pgd_armijo(&prob, &x0, &PgdConfig { max_iter: 200, ..Default::default() });
            for w in out.obj_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(out.x.feasibility_error() < 1e-10);
        }
    }

    #[test]
    fn newton_polish_reaches_tight_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let prob = random_problem(8, 3, &mut rng);
            let x0 = random_stiefel(8, 3, &mut rng).into_matrix();
            let cfg = PgdConfig { newton: true, bb: true, foc_tol: 1e-11, max_iter: 500, ..Default::default() };
            let out = pgd_armijo(&prob, &x0, &cfg);
            assert!(out.converged, "foc {}", out.foc);
            let plain =
                pgd_armijo(&prob, &x0, &PgdConfig { bb: true, foc_tol: 1e-11, max_iter: 5000, ..Default::default() });
            // both are stationary; Newton must not end higher than its start
            assert!(out.value <= objective(&prob, &x0));
            let _ = plain;
        }
    }

    #[test]
    fn cone_projection_keeps_xtb_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prob = random_problem(6, 2, &mut rng);
        let x0 = project_onto_cone(&random_stiefel(6, 2, &mut rng).into_matrix(), prob.b()).unwrap();
        let out = pgd_armijo(&prob, x0.matrix(), &PgdConfig { cone: true, max_iter: 50, ..Default::default() });
        let xtb = out.x.matrix().transpose() * prob.b();
        assert!((&xtb - xtb.transpose()).norm() < 1e-8);
        for w in out.obj_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
