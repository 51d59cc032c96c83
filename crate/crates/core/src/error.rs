use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The K-th neighbour distance of some points is zero, so the Gaussian
    /// bandwidth is undefined.
    #[error("{} point(s) have at least K exact duplicates (first: {:?})", .vertices.len(), &.vertices[..(.vertices.len().min(8))])]
    DuplicatePoints { vertices: Vec<usize> },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{what} is rank deficient (smallest singular value {sigma_min:.3e})")]
    RankDeficient { what: &'static str, sigma_min: f64 },

    #[error("{what} is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { what: &'static str, min_eig: f64 },

    #[error(
        "label budget exceeds class proportion: C = C_U - rr^T/n has smallest eigenvalue {min_eig:.3e} (p = {p}, m/k = {p_tilde})"
    )]
    LabelBudget { min_eig: f64, p: f64, p_tilde: f64 },

    #[error("operator is indefinite on the search space (curvature {curvature:.3e})")]
    IndefiniteOperator { curvature: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    EigenNotConverged { residuals: Vec<f64>, iterations: usize },

    #[error("every vertex is labeled; nothing left to infer")]
    AllLabeled,

    #[error("connected component {component} ({size} vertices, e.g. vertex {example}) has no labeled vertex")]
    UnlabeledComponent { component: usize, size: usize, example: usize },

    #[error("vertices {0} and {1} belong to the same class")]
    SameClassPair(usize, usize),

    #[error("requested {requested} queries but only {available} unlabeled vertices remain")]
    BudgetExceedsPool { requested: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
