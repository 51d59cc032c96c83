//! Numerical layer: sparse operators, Krylov solvers, eigensolvers and the
//! small dense factorizations used on k x k blocks.

pub mod cg;
pub mod dense;
pub mod eigen;
pub mod ichol;
pub mod pinv;
pub mod sparse;

pub use cg::{cg_solve, CgOptions, CgReport, Preconditioner};
pub use dense::{
    feasibility_error, orthonormalize_columns, project_onto_cone, random_orthogonal, random_stiefel, small_svd,
    small_sym_eig, sqrt_and_invsqrt, stiefel_project, StiefelPoint,
};
pub use eigen::{smallest_eigenpairs, EigenMethod, EigenOptions, EigenPairs};
pub use ichol::IncompleteCholesky;
pub use pinv::{projected_shifted_pinv_apply, projected_shifted_pinv_apply_with};
pub use sparse::{CsrMatrix, DenseOperator, LinearOperator, MeanZeroProjected};
