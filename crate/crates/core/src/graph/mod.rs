//! Weighted undirected graphs, feature matrices and label sets.

mod generators;
pub mod io;
mod knn;

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub use generators::{
    gen_barbell, gen_gaussian_blobs, gen_gaussian_ring, gen_grid, gen_path, gen_random_tree, ring_centers, PointCloud,
};
pub use knn::{build_knn_graph, build_knn_graph_with, KnnBackend, DEFAULT_K, KDTREE_THRESHOLD};

/// Symmetric, nonnegative, loop-free weighted adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
    degrees: Vec<f64>,
}

impl Graph {
    /// Builds a graph from undirected edges. Repeated edges have their
    /// weights summed; zero weights are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut t = Vec::new();
        for (i, j, w) in edges {
            if i == j {
                return Err(Error::invalid(format!("self-loop at vertex {i}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            t.push((i, j, w));
            t.push((j, i, w));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, t)?;
        Ok(Self::from_adjacency_unchecked(adjacency))
    }

    /// Wraps an adjacency that the caller guarantees is symmetric,
    /// nonnegative and has an empty diagonal.
    pub(crate) fn from_adjacency_unchecked(adjacency: CsrMatrix) -> Self {
        let degrees = (0..adjacency.nrows()).map(|i| adjacency.row(i).map(|(_, w)| w).sum()).collect();
        Graph { adjacency, degrees }
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency.get(i, j)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency.row(i)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.triplets().filter(|&(i, j, _)| i < j)
    }

    /// `L = D - W`.
    pub fn laplacian(&self) -> CsrMatrix {
        let n = self.n_vertices();
        let t = self.adjacency.triplets().map(|(i, j, w)| (i, j, -w)).chain((0..n).map(|i| (i, i, self.degrees[i])));
        CsrMatrix::from_triplets(n, n, t).expect("indices come from a valid matrix")
    }

    /// Connected component id for every vertex, numbered in order of their
    /// smallest vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n_vertices();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for (u, _) in self.neighbors(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = next;
                        queue.push_back(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Degrees in the subgraph induced by vertices with `keep[i] == true`.
    /// Entries for dropped vertices are zero.
    pub fn induced_degrees(&self, keep: &[bool]) -> Vec<f64> {
        (0..self.n_vertices())
            .map(|i| if keep[i] { self.neighbors(i).filter(|&(j, _)| keep[j]).map(|(_, w)| w).sum() } else { 0.0 })
            .collect()
    }

    /// Relabels vertices: vertex `i` of `self` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.n_vertices();
        if perm.len() != n {
            return Err(Error::invalid("permutation length mismatch"));
        }
        Graph::from_edges(n, self.edges().map(|(i, j, w)| (perm[i], perm[j], w)))
    }

    /// Sum of weights over edges whose endpoints carry different labels.
    pub fn cut_cost(&self, labels: &[usize]) -> f64 {
        self.edges().filter(|&(i, j, _)| labels[i] != labels[j]).map(|(_, _, w)| w).sum()
    }
}

/// Row-major real feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::invalid("feature matrix needs at least one row and one column"));
        }
        if data.len() != rows * dim {
            return Err(Error::invalid(format!("expected {} values, got {}", rows * dim, data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature at row {}, column {}", pos / dim, pos % dim)));
        }
        Ok(FeatureMatrix { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select_rows(&self, order: &[usize]) -> FeatureMatrix {
        let data = order.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        FeatureMatrix { rows: order.len(), dim: self.dim, data }
    }
}

/// Supervised vertices with their classes, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    entries: Vec<(usize, usize)>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(entries: Vec<(usize, usize)>, num_classes: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("label set is empty"));
        }
        let mut seen = HashSet::new();
        for &(v, c) in &entries {
            if c >= num_classes {
                return Err(Error::invalid(format!("class {c} of vertex {v} is out of range (k = {num_classes})")));
            }
            if !seen.insert(v) {
                return Err(Error::invalid(format!("vertex {v} labeled twice")));
            }
        }
        Ok(LabelSet { entries, num_classes })
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(v, _)| v)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.entries.iter().any(|&(u, _)| u == v)
    }

    /// Boolean mask of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for v in self.vertices() {
            m[v] = true;
        }
        m
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &(_, y) in &self.entries {
            c[y] += 1;
        }
        c
    }

    pub fn push(&mut self, v: usize, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::invalid(format!("class {class} out of range")));
        }
        if self.contains(v) {
            return Err(Error::invalid(format!("vertex {v} already labeled")));
        }
        self.entries.push((v, class));
        Ok(())
    }
}

/// Principal and cross blocks of the Laplacian for a labeled/unlabeled split.
#[derive(Debug, Clone)]
pub struct GroundedBlocks {
    /// `L_U`, indexed by position in `unlabeled`.
    pub l_u: CsrMatrix,
    /// `L_Ul`, rows by `unlabeled`, columns by `labeled`.
    pub l_ul: CsrMatrix,
    /// `L_l`, kept for reassembly.
    pub l_l: CsrMatrix,
    /// Original vertex ids of unlabeled vertices, ascending.
    pub unlabeled: Vec<usize>,
    /// Original vertex ids of labeled vertices, in label-set order.
    pub labeled: Vec<usize>,
}

impl GroundedBlocks {
    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    /// Reassembles the full Laplacian from the blocks.
    pub fn reassemble(&self) -> CsrMatrix {
        let n = self.unlabeled.len() + self.labeled.len();
        let u = &self.unlabeled;
        let l = &self.labeled;
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        t.extend(self.l_u.triplets().map(|(i, j, w)| (u[i], u[j], w)));
        t.extend(self.l_l.triplets().map(|(i, j, w)| (l[i], l[j], w)));
        for (i, j, w) in self.l_ul.triplets() {
            t.push((u[i], l[j], w));
            t.push((l[j], u[i], w));
        }
        CsrMatrix::from_triplets(n, n, t).expect("block indices are in range")
    }
}

/// Splits the Laplacian into grounded blocks.
pub fn grounded_blocks(g: &Graph, labeled: &LabelSet) -> Result<GroundedBlocks> {
    grounded_blocks_for(g, &labeled.vertices().collect::<Vec<_>>())
}

pub(crate) fn grounded_blocks_for(g: &Graph, labeled: &[usize]) -> Result<GroundedBlocks> {
    let n = g.n_vertices();
    if labeled.is_empty() {
        return Err(Error::invalid("grounding needs at least one labeled vertex"));
    }
    let mut pos = vec![None; n];
    for (a, &v) in labeled.iter().enumerate() {
        if v >= n {
            return Err(Error::invalid(format!("labeled vertex {v} out of range")));
        }
        pos[v] = Some(a);
    }
    let unlabeled: Vec<usize> = (0..n).filter(|&v| pos[v].is_none()).collect();
    if unlabeled.is_empty() {
        return Err(Error::AllLabeled);
    }
    let mut upos = vec![usize::MAX; n];
    for (a, &v) in unlabeled.iter().enumerate() {
        upos[v] = a;
    }
    let lap = g.laplacian();
    let (mut tu, mut tul, mut tl) = (Vec::new(), Vec::new(), Vec::new());
    for (i, j, w) in lap.triplets() {
        match (pos[i], pos[j]) {
            (None, None) => tu.push((upos[i], upos[j], w)),
            (None, Some(b)) => tul.push((upos[i], b, w)),
            (Some(a), Some(b)) => tl.push((a, b, w)),
            (Some(_), None) => {}
        }
    }
    let nu = unlabeled.len();
    let m = labeled.len();
    Ok(GroundedBlocks {
        l_u: CsrMatrix::from_triplets(nu, nu, tu)?,
        l_ul: CsrMatrix::from_triplets(nu, m, tul)?,
        l_l: CsrMatrix::from_triplets(m, m, tl)?,
        unlabeled,
        labeled: labeled.to_vec(),
    })
}
