//! Newton-type direction from the linearized optimality system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::dense::{project_out, sym};
use crate::linalg::{projected_shifted_pinv_apply_with, small_sym_eig, sqrt_and_invsqrt};
use crate::problem::StiefelQuadratic;

#[derive(Debug, Clone)]
pub struct SqpOptions {
    /// Use the `-lambda_j P` shift in each solve.
    pub shift: bool,
    /// Skip the shift up front when `lambda_j` is not below `d1_estimate`.
    pub safeguard: bool,
    pub d1_estimate: Option<f64>,
    pub tol: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions { shift: true, safeguard: false, d1_estimate: None, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct SqpDirection {
    pub z: DMatrix<f64>,
    /// Eigenvalues of `C^{-1/2} Lambda C^{-1/2}`, ascending.
    pub lambda: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `Z = O U^T C^{-1/2}` with `U diag(lambda) U^T = C^{-1/2} Lambda C^{-1/2}` and
/// `o_j = (P L P - lambda_j P)^+ P E C^{-1/2} u_j`, where
/// `E = B C^{1/2} - (L X C - X Lambda)` and `P` projects out `X` and the
/// constraint vectors.
pub fn sqp_direction<P: StiefelQuadratic + ?Sized>(
    prob: &P,
    x: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    opts: &SqpOptions,
) -> Result<SqpDirection> {
    let (_, c_invhalf) = sqrt_and_invsqrt(prob.c())?;
    let lam = sym(lambda);
    let (vals, u) = small_sym_eig(&sym(&(&c_invhalf * &lam * &c_invhalf)));

    let e = prob.b_c_half() - (prob.apply_l(x) * prob.c() - x * &lam);
    let mut rhs = e * &c_invhalf * &u;
    let mut extra = prob.constraints();
    extra.extend(prob.operator().null_vectors());
    project_out(&mut rhs, &extra);
    let xt_rhs = x.transpose() * &rhs;
    rhs -= x * xt_rhs;

    let l = prob.operator();
    let cols: Vec<(DVector<f64>, Option<String>)> = (0..prob.k())
        .into_par_iter()
        .map(|j| {
            let b = rhs.column(j).into_owned();
            if b.norm() == 0.0 {
                return (b, None);
            }
            let mut shift = if opts.shift { vals[j] } else { 0.0 };
            if opts.safeguard {
                if let Some(d1) = opts.d1_estimate {
                    if shift >= d1 {
                        shift = 0.0;
                    }
                }
            }
            match projected_shifted_pinv_apply_with(l, x, &extra, shift, &b, opts.tol) {
                Ok(o) => (o, None),
                Err(Error::IndefiniteOperator { curvature }) if shift != 0.0 => {
                    let warning = Some(format!(
                        "column {j}: shift {shift:.6e} gives negative curvature {curvature:.3e}, using shift 0"
                    ));
                    match projected_shifted_pinv_apply_with(l, x, &extra, 0.0, &b, opts.tol) {
                        Ok(o) => (o, warning),
                        Err(_) => {
                            (b, Some(format!("column {j}: unshifted solve failed, using the projected residual")))
                        }
                    }
                }
                Err(_) => (b, Some(format!("column {j}: solve failed, using the projected residual"))),
            }
        })
        .collect();

    let mut o = DMatrix::zeros(x.nrows(), prob.k());
    let mut warnings = Vec::new();
    for (j, (col, w)) in cols.into_iter().enumerate() {
        o.set_column(j, &col);
        warnings.extend(w);
    }
    let mut z = o * u.transpose() * c_invhalf;
    project_out(&mut z, &extra);
    let xtz = x.transpose() * &z;
    z -= x * xtz;
    Ok(SqpDirection { z, lambda: vals.iter().copied().collect(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_stiefel;
    use crate::problem::{multiplier_estimate, DenseProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DenseProblem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let l = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let b = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.3..0.3));
        let c = DMatrix::identity(k, k) * 2.0 + &m * m.transpose();
        DenseProblem::new(l, b, c).unwrap()
    }

    #[test]
    fn unshifted_direction_matches_dense_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let prob = random_problem(8, 2, &mut rng);
            let x = random_stiefel(8, 2, &mut rng).into_matrix();
            let lam = multiplier_estimate(&prob, &x);
            let opts = SqpOptions { shift: false, ..Default::default() };
            let got = sqp_direction(&prob, &x, &lam, &opts).unwrap().z;

            let (_, cih) = sqrt_and_invsqrt(&prob.c).unwrap();
            let (_, u) = small_sym_eig(&sym(&(&cih * &lam * &cih)));
            let p = DMatrix::identity(8, 8) - &x * x.transpose();
            let pinv = (&p * &prob.l * &p).pseudo_inverse(1e-10).unwrap();
            let e = &prob.b * &prob.c_half - (&prob.l * &x * &prob.c - &x * &lam);
            let want = pinv * &p * e * &cih * &u * u.transpose() * &cih;
            assert!((&got - &want).norm() < 1e-8 * want.norm().max(1.0), "{}", (&got - &want).norm());
        }
    }

    #[test]
    fn shifted_direction_solves_the_shifted_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prob = random_problem(8, 2, &mut rng);
        let x = random_stiefel(8, 2, &mut rng).into_matrix();
        // a multiplier with small eigenvalues keeps the shifted operator definite
        let lam = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.02]);
        let d = sqp_direction(&prob, &x, &lam, &SqpOptions::default()).unwrap();
        assert!(d.warnings.is_empty());
        let (_, cih) = sqrt_and_invsqrt(&prob.c).unwrap();
        let p = DMatrix::identity(8, 8) - &x * x.transpose();
        let e = &prob.b * &prob.c_half - (&prob.l * &x * &prob.c - &x * &lam);
        // P (L Z C - Z Lambda) = P E
        let lhs = &p * (&prob.l * &d.z * &prob.c - &d.z * &lam);
        let rhs = &p * e;
        let _ = cih;
        assert!((&lhs - &rhs).norm() < 1e-7 * rhs.norm().max(1.0), "{}", (&lhs - &rhs).norm());
    }

    #[test]
    fn direction_is_orthogonal_to_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let prob = random_problem(8, 3, &mut rng);
            let x = random_stiefel(8, 3, &mut rng).into_matrix();
            let lam = multiplier_estimate(&prob, &x);
            let z = sqp_direction(&prob, &x, &lam, &SqpOptions::default()).unwrap().z;
            assert!((x.transpose() * z).norm() < 1e-10);
        }
    }

    #[test]
    fn vanishes_at_stationary_point() {
        let l = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0, 3.0, 5.0, 8.0]));
        let prob = DenseProblem::new(l, DMatrix::zeros(5, 2), DMatrix::identity(2, 2)).unwrap();
        let x = DMatrix::identity(5, 2);
        let lam = multiplier_estimate(&prob, &x);
        let z = sqp_direction(&prob, &x, &lam, &SqpOptions::default()).unwrap().z;
        assert!(z.norm() < 1e-12);
    }
}
