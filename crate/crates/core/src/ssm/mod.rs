//! Sequential subspace minimization.
//!
//! Each outer step solves the problem restricted to
//! `span(X_t, Z_t, u, grad_t)`, where `Z_t` is the SQP direction and `u`
//! holds eigenvector estimates of `L`, then lifts the reduced minimizer
//! back with `X_{t+1} = V X~`.

pub mod pgd;
pub mod sqp;
pub mod subspace;

use std::io::Write;

use nalgebra::DMatrix;

pub use pgd::{pgd_armijo, riemannian_gradient, ArmijoConfig, PgdConfig, PgdOutcome};
pub use sqp::{sqp_direction, SqpDirection, SqpOptions};
pub use subspace::{build_subspace, reduced_problem, solve_subspace, ReducedOptions, ReducedSolve};

use crate::error::{Error, Result};
use crate::linalg::dense::{project_out, sym};
use crate::linalg::{
    feasibility_error, small_sym_eig, smallest_eigenpairs, sqrt_and_invsqrt, EigenOptions, StiefelPoint,
};
use crate::problem::{evaluate, foc_from_gradient, project_feasible, PartitionedProblem, StiefelQuadratic};
use crate::procrustes::approx_solve;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SsmConfig {
    pub foc_tol: f64,
    pub max_outer: usize,
    pub armijo: ArmijoConfig,
    pub subspace_inner_iters: usize,
    /// Eigenvector estimates kept in the subspace; `None` means `k`.
    pub include_eigvecs: Option<usize>,
    pub safeguard_shifts: bool,
    pub shift_sqp: bool,
    /// Random starts per reduced solve besides the warm and Ritz starts.
    pub reduced_restarts: usize,
    pub seed: u64,
}

impl Default for SsmConfig {
    fn default() -> Self {
        SsmConfig {
            foc_tol: 1e-6,
            max_outer: 50,
            armijo: ArmijoConfig::default(),
            subspace_inner_iters: 200,
            include_eigvecs: None,
            safeguard_shifts: false,
            shift_sqp: true,
            reduced_restarts: 4,
            seed: 0,
        }
    }
}

impl SsmConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        if !(a.sigma > 0.0 && a.sigma < 1.0) {
            return Err(Error::Config(format!("armijo sigma must lie in (0, 1), got {}", a.sigma)));
        }
        if !(a.beta > 0.0 && a.beta < 1.0) {
            return Err(Error::Config(format!("armijo beta must lie in (0, 1), got {}", a.beta)));
        }
        if !(a.s > 0.0) {
            return Err(Error::Config(format!("armijo s must be positive, got {}", a.s)));
        }
        if !(self.foc_tol > 0.0) {
            return Err(Error::Config("foc_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One JSON-lines record per outer iteration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub foc: f64,
    pub objective: f64,
    /// Eigenvalues of `C^{-1/2} Lambda C^{-1/2}`, ascending.
    pub lambda: Vec<f64>,
    pub subspace_dim: usize,
    pub dropped: usize,
    pub inner_iters: usize,
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRecord]) -> Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Eigenvector estimates of `L`: Ritz pairs `(sigma, u)`.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: StiefelPoint,
    pub lambda: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub eig_est: Option<EigenEstimate>,
    pub foc_history: Vec<f64>,
    pub obj_history: Vec<f64>,
    pub iter: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SsmResult {
    pub x: StiefelPoint,
    /// `X C^{1/2}`.
    pub x_scaled: DMatrix<f64>,
    pub state: SolverState,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

impl SsmResult {
    pub fn foc(&self) -> f64 {
        self.state.foc_history.last().copied().unwrap_or(f64::INFINITY)
    }
    pub fn objective(&self) -> f64 {
        self.state.obj_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Runs SSM from the Procrustes-aligned eigenmap unless `x0` is given.
pub fn ssm_solve(prob: &PartitionedProblem, x0: Option<&DMatrix<f64>>, cfg: &SsmConfig) -> Result<SsmResult> {
    match x0 {
        Some(x) => ssm_solve_from(prob, x, cfg),
        None => {
            let init = approx_solve(prob, &EigenOptions::default())?;
            ssm_solve_from(prob, init.aligned.x.matrix(), cfg)
        }
    }
}

const STALL_WINDOW: usize = 5;
const STALL_REL: f64 = 1e-3;

fn exact_estimate<P: StiefelQuadratic + ?Sized>(prob: &P, m: usize, seed: u64) -> Result<Option<EigenEstimate>> {
    if m == 0 {
        return Ok(None);
    }
    let opts = EigenOptions { seed, tol: 1e-10, ..Default::default() };
    let e = smallest_eigenpairs(prob.operator(), m, &prob.constraints(), &opts)?;
    Ok(Some(EigenEstimate { values: e.values, vectors: e.vectors }))
}

/// SSM for any [`StiefelQuadratic`] from an explicit start.
pub fn ssm_solve_from<P: StiefelQuadratic + ?Sized>(prob: &P, x0: &DMatrix<f64>, cfg: &SsmConfig) -> Result<SsmResult> {
    cfg.validate()?;
    let n = prob.n();
    let k = prob.k();
    let constraints = prob.constraints();
    if x0.shape() != (n, k) {
        return Err(Error::invalid(format!("start has shape {:?}, expected ({n}, {k})", x0.shape())));
    }
    if k + constraints.len() > n {
        return Err(Error::invalid("feasible set is empty"));
    }
    let (_, c_invhalf) = sqrt_and_invsqrt(prob.c())?;
    let m = cfg.include_eigvecs.unwrap_or(k).min(n - constraints.len());

    let mut x = project_feasible(prob, x0)?.into_matrix();
    let mut eig_est = exact_estimate(prob, m, cfg.seed)?;
    let mut state_warnings = Vec::new();
    let mut foc_history = Vec::new();
    let mut obj_history = Vec::new();
    let mut trace = Vec::new();
    let mut restarted = false;
    let mut z = DMatrix::zeros(n, k);
    let mut iter = 0;
    let mut converged = false;
    let mut last_dim = 0;
    let mut last_dropped = 0;
    let mut last_inner = 0;

    let (g, lam) = loop {
        let mut ev = evaluate(prob, &x);
        project_out(&mut ev.gradient, &constraints);
        let g = ev.gradient;
        let foc = foc_from_gradient(&x, &g);
        let lam = sym(&(x.transpose() * &g));
        let (mu, _) = small_sym_eig(&sym(&(&c_invhalf * &lam * &c_invhalf)));
        foc_history.push(foc);
        obj_history.push(ev.value);
        trace.push(TraceRecord {
            iter,
            foc,
            objective: ev.value,
            lambda: mu.iter().copied().collect(),
            subspace_dim: last_dim,
            dropped: last_dropped,
            inner_iters: last_inner,
        });

        if foc <= cfg.foc_tol {
            converged = true;
            break (g, lam);
        }
        if iter >= cfg.max_outer {
            break (g, lam);
        }
        let h = foc_history.len();
        if h > STALL_WINDOW && foc > (1.0 - STALL_REL) * foc_history[h - 1 - STALL_WINDOW] {
            if restarted {
                state_warnings.push(format!("stalled at iteration {iter} with FOC {foc:.3e}"));
                break (g, lam);
            }
            restarted = true;
            eig_est = exact_estimate(prob, m, cfg.seed.wrapping_add(iter as u64))?;
        }

        let sqp_opts = SqpOptions {
            shift: cfg.shift_sqp,
            safeguard: cfg.safeguard_shifts,
            d1_estimate: eig_est.as_ref().and_then(|e| e.values.first().copied()),
            tol: 1e-10,
        };
        let dir = sqp_direction(prob, &x, &lam, &sqp_opts)?;
        state_warnings.extend(dir.warnings.iter().map(|w| format!("iteration {iter}: {w}")));
        z = dir.z;
        let rgrad = &g - &x * &lam;

        let mut extra: Vec<&DMatrix<f64>> = vec![&z];
        if let Some(e) = &eig_est {
            extra.push(&e.vectors);
        }
        extra.push(&rgrad);
        let (v, dropped) = build_subspace(&x, &extra, &constraints);

        let ropts = ReducedOptions {
            armijo: cfg.armijo.clone(),
            max_iter: cfg.subspace_inner_iters,
            foc_tol: (0.01 * cfg.foc_tol).min(1e-8),
            restarts: cfg.reduced_restarts,
            seed: cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(iter as u64),
        };
        let red = solve_subspace(prob, &v, &x, &ropts);
        let mut x_new = &v * red.x.matrix();
        if feasibility_error(&x_new) > 1e-10 {
            x_new = project_feasible(prob, &x_new)?.into_matrix();
        }
        if let Some(e) = &eig_est {
            let (vals, vecs) = small_sym_eig(&red.l_reduced);
            let cnt = e.values.len().min(vals.len());
            eig_est = Some(EigenEstimate {
                values: vals.iter().take(cnt).copied().collect(),
                vectors: &v * vecs.columns(0, cnt),
            });
        }
        last_dim = v.ncols();
        last_dropped = dropped;
        last_inner = red.inner_iters;
        iter += 1;

        // rounding in the lift must not break monotonicity
        let new_val = crate::problem::objective(prob, &x_new);
        if new_val <= *obj_history.last().unwrap() {
            x = x_new;
        }
    };

    let x_scaled = &x * prob.c_half();
    let state = SolverState {
        x: StiefelPoint::new_unchecked(x.clone()),
        lambda: lam,
        g,
        z,
        eig_est,
        foc_history,
        obj_history,
        iter,
        warnings: state_warnings,
    };
    Ok(SsmResult { x: StiefelPoint::new_unchecked(x), x_scaled, state, converged, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_barbell, LabelSet};
    use crate::linalg::random_stiefel;
    use crate::problem::{assemble, decode, DenseProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn barbell_converges_quickly_and_correctly() {
        let g = gen_barbell(5).unwrap();
        let labels = LabelSet::new(vec![(0, 0), (9, 1)], 2).unwrap();
        let prob = assemble(&g, &labels).unwrap();
        let res = ssm_solve(&prob, None, &SsmConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.foc() <= 1e-6);
        assert!(res.state.iter <= 10);
        let pred = decode(&prob, &res.x_scaled);
        let truth: Vec<usize> = (0..10).map(|v| usize::from(v >= 5)).collect();
        assert_eq!(pred.labels, truth);
    }

    #[test]
    fn objective_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 30;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let l = &a * a.transpose();
            let b = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let prob = DenseProblem::new(l, b, DMatrix::identity(3, 3) * 2.0).unwrap();
            let x0 = random_stiefel(n, 3, &mut rng).into_matrix();
            let res = ssm_solve_from(&prob, &x0, &SsmConfig { max_outer: 15, ..Default::default() }).unwrap();
            for w in res.state.obj_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(res.x.feasibility_error() < 1e-10);
        }
    }

    #[test]
    fn stationary_start_takes_no_steps() {
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        let prob = DenseProblem::new(l, DMatrix::zeros(5, 2), DMatrix::identity(2, 2)).unwrap();
        let res = ssm_solve_from(&prob, &DMatrix::identity(5, 2), &SsmConfig::default()).unwrap();
        assert_eq!(res.state.iter, 0);
        assert!(res.converged);
    }

    #[test]
    fn trace_serializes_as_json_lines() {
        let g = gen_barbell(4).unwrap();
        let labels = LabelSet::new(vec![(0, 0), (7, 1)], 2).unwrap();
        let prob = assemble(&g, &labels).unwrap();
        let res = ssm_solve(&prob, None, &SsmConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &res.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), res.trace.len());
        for line in text.lines() {
            let r: TraceRecord = serde_json::from_str(line).unwrap();
            assert!(r.foc.is_finite());
        }
    }

    #[test]
    fn invalid_armijo_rejected() {
        let cfg = SsmConfig { armijo: ArmijoConfig { beta: 1.0, ..Default::default() }, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
