//! Query selection from grounded-Laplacian eigenvectors, optionally mixed
//! with prediction margins.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{grounded_blocks_for, Graph, LabelSet};
use crate::linalg::{smallest_eigenpairs, EigenOptions};
use crate::problem::Prediction;

pub const DEFAULT_ELL: usize = 3;
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Spectral scores of the unlabeled vertices.
#[derive(Debug, Clone)]
pub struct GroundedScores {
    /// Unlabeled vertex ids, ascending.
    pub vertices: Vec<usize>,
    pub scores: Vec<f64>,
    /// Eigenvectors of `L_U`, one row per entry of `vertices`.
    pub u: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Degrees in the subgraph induced by the unlabeled vertices.
    pub induced_degree: Vec<f64>,
}

impl GroundedScores {
    /// Scores indexed by vertex; labeled vertices get `-inf`.
    pub fn per_vertex(&self, n: usize) -> Vec<f64> {
        let mut s = vec![f64::NEG_INFINITY; n];
        for (&v, &x) in self.vertices.iter().zip(&self.scores) {
            s[v] = x;
        }
        s
    }
}

/// `s_i = d~_i sqrt(sum_l U_il^4)` with `U` the `ell` smallest eigenvectors
/// of the grounded Laplacian `L_U`; for `ell = 1` this is `d~_i u_i^2`.
///
/// Without labels `L_U = L` and its lowest eigenvector is the constant
/// `1/sqrt(M)`; only that vector is used, so scores are `d_i / M`.
pub fn grounded_score(g: &Graph, labeled: &[usize], ell: usize, opts: &EigenOptions) -> Result<GroundedScores> {
    if ell == 0 {
        return Err(Error::invalid("ell must be at least 1"));
    }
    let n = g.n_vertices();
    let mut keep = vec![true; n];
    for &v in labeled {
        if v >= n {
            return Err(Error::invalid(format!("labeled vertex {v} out of range")));
        }
        keep[v] = false;
    }
    let induced = g.induced_degrees(&keep);
    let (vertices, u, eigenvalues) = if labeled.is_empty() {
        let u = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        ((0..n).collect::<Vec<_>>(), u, vec![0.0])
    } else {
        let blocks = match grounded_blocks_for(g, labeled) {
            Ok(b) => b,
            Err(Error::AllLabeled) => {
                return Ok(GroundedScores {
                    vertices: Vec::new(),
                    scores: Vec::new(),
                    u: DMatrix::zeros(0, 0),
                    eigenvalues: Vec::new(),
                    induced_degree: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        };
        let m = ell.min(blocks.n_unlabeled());
        let pairs = smallest_eigenpairs(&blocks.l_u, m, &[], opts)?;
        (blocks.unlabeled, pairs.vectors, pairs.values)
    };
    let induced_degree: Vec<f64> = vertices.iter().map(|&v| induced[v]).collect();
    let scores = (0..vertices.len())
        .map(|i| induced_degree[i] * u.row(i).iter().map(|x| x.powi(4)).sum::<f64>().sqrt())
        .collect();
    Ok(GroundedScores { vertices, scores, u, eigenvalues, induced_degree })
}

/// Largest minus second-largest entry.
pub fn margin(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in row {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    if second == f64::NEG_INFINITY {
        0.0
    } else {
        first - second
    }
}

/// Row margins of a prediction's score matrix.
pub fn margins(pred: &Prediction) -> Vec<f64> {
    (0..pred.scores.nrows()).map(|i| margin(&pred.scores.row(i).iter().copied().collect::<Vec<_>>())).collect()
}

/// `s'_i = s_i - lambda margin_i`.
pub fn combined_score(spectral: &[f64], margins: &[f64], lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return spectral.to_vec();
    }
    spectral.iter().zip(margins).map(|(&s, &m)| s - lambda * m).collect()
}

/// `1 + epsilon^{1/(2k)}`.
pub fn lambda_growth(epsilon: f64, k: usize) -> f64 {
    1.0 + epsilon.powf(1.0 / (2.0 * k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Spectral,
    Random,
    Degree,
    MarginOnly,
    AbsU,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spectral" => Strategy::Spectral,
            "random" => Strategy::Random,
            "degree" => Strategy::Degree,
            "margin_only" => Strategy::MarginOnly,
            "abs_u" => Strategy::AbsU,
            _ => return Err(Error::Config(format!("unknown strategy {s:?}"))),
        })
    }
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Spectral => "spectral",
            Strategy::Random => "random",
            Strategy::Degree => "degree",
            Strategy::MarginOnly => "margin_only",
            Strategy::AbsU => "abs_u",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActiveState {
    pub labeled: LabelSet,
    pub lambda: f64,
    pub epsilon: f64,
    pub ell: usize,
    pub query_log: Vec<usize>,
    /// Last grounded eigenvectors and their vertices; seeds the next solve.
    warm: Option<(Vec<usize>, DMatrix<f64>)>,
}

impl ActiveState {
    pub fn new(labeled: LabelSet) -> Self {
        ActiveState {
            labeled,
            lambda: 0.0,
            epsilon: DEFAULT_EPSILON,
            ell: DEFAULT_ELL,
            query_log: Vec::new(),
            warm: None,
        }
    }

    /// Grounded scores, started from the previous call's eigenvectors
    /// restricted to the vertices that are still unlabeled.
    fn grounded(&mut self, g: &Graph, labeled: &[usize], ell: usize, opts: &EigenOptions) -> Result<GroundedScores> {
        let mut opts = opts.clone();
        if let (None, Some((verts, u))) = (&opts.initial, &self.warm) {
            let keep: Vec<usize> = (0..verts.len()).filter(|&i| !self.labeled.contains(verts[i])).collect();
            if !keep.is_empty() && u.ncols() > 0 {
                opts.initial = Some(u.select_rows(&keep));
            }
        }
        let gs = grounded_score(g, labeled, ell, &opts)?;
        self.warm = Some((gs.vertices.clone(), gs.u.clone()));
        Ok(gs)
    }

    pub fn unlabeled_mask(&self, n: usize) -> Vec<bool> {
        self.labeled.mask(n).into_iter().map(|b| !b).collect()
    }

    /// Multiplies `lambda` by the schedule factor.
    pub fn advance_lambda(&mut self) {
        self.lambda *= lambda_growth(self.epsilon, self.labeled.num_classes());
    }

    /// Scores by vertex for `strategy`; labeled vertices get `-inf`.
    pub fn scores<R: Rng + ?Sized>(
        &mut self,
        g: &Graph,
        strategy: Strategy,
        prediction: Option<&Prediction>,
        opts: &EigenOptions,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let n = g.n_vertices();
        let free = self.unlabeled_mask(n);
        let labeled: Vec<usize> = self.labeled.vertices().collect();
        let need_margin = |pred: Option<&Prediction>| -> Result<Vec<f64>> {
            pred.map(margins).ok_or_else(|| Error::invalid("this strategy needs a prediction"))
        };
        let mut s = match strategy {
            Strategy::Spectral => {
                let gs = self.grounded(g, &labeled, self.ell, opts)?;
                let spectral = gs.per_vertex(n);
                match prediction {
                    Some(p) if self.lambda != 0.0 => combined_score(&spectral, &need_margin(Some(p))?, self.lambda),
                    _ => spectral,
                }
            }
            Strategy::Random => (0..n).map(|_| rng.random::<f64>()).collect(),
            Strategy::Degree => g.degrees().to_vec(),
            Strategy::MarginOnly => need_margin(prediction)?.into_iter().map(|m| -m).collect(),
            Strategy::AbsU => {
                let gs = self.grounded(g, &labeled, 1, opts)?;
                let mut s = vec![f64::NEG_INFINITY; n];
                for (i, &v) in gs.vertices.iter().enumerate() {
                    s[v] = gs.u[(i, 0)].abs();
                }
                s
            }
        };
        for v in 0..n {
            if !free[v] {
                s[v] = f64::NEG_INFINITY;
            }
        }
        Ok(s)
    }

    /// Picks the `batch` highest-scoring unlabeled vertices (lower index on
    /// ties) and records them in the query log.
    pub fn query(&mut self, scores: &[f64], batch: usize) -> Result<Vec<usize>> {
        let picked = top_unlabeled(scores, &self.labeled.mask(scores.len()), batch)?;
        self.query_log.extend(&picked);
        Ok(picked)
    }

    /// Adds oracle labels for queried vertices.
    pub fn reveal(&mut self, vertices: &[usize], truth: &[usize]) -> Result<()> {
        for &v in vertices {
            self.labeled.push(v, truth[v])?;
        }
        Ok(())
    }
}

/// The `batch` largest scores among vertices with `labeled[v] == false`.
pub fn top_unlabeled(scores: &[f64], labeled: &[bool], batch: usize) -> Result<Vec<usize>> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&v| !labeled[v]).collect();
    if batch > cand.len() {
        return Err(Error::BudgetExceedsPool { requested: batch, available: cand.len() });
    }
    cand.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    cand.truncate(batch);
    Ok(cand)
}

/// Smallest eigenvalue of the grounded Laplacian, by dense solve.
pub fn grounded_min_eigenvalue(g: &Graph, labeled: &[usize]) -> Result<f64> {
    let blocks = grounded_blocks_for(g, labeled)?;
    let d = blocks.l_u.to_dense_matrix();
    Ok(d.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min))
}

/// `|u_i|` of the lowest grounded eigenvector, zero on labeled vertices.
pub fn abs_u(g: &Graph, labeled: &[usize], opts: &EigenOptions) -> Result<DVector<f64>> {
    let gs = grounded_score(g, labeled, 1, opts)?;
    let mut out = DVector::zeros(g.n_vertices());
    for (i, &v) in gs.vertices.iter().enumerate() {
        out[v] = gs.u[(i, 0)].abs();
    }
    Ok(out)
}
