//! K-nearest-neighbour graphs with self-tuning Gaussian weights
//! `w_ij = exp(-4 |x_i - x_j|^2 / d_K(x_i)^2)`, symmetrized as `(W + W^T) / 2`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use rayon::prelude::*;

use super::{FeatureMatrix, Graph};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub const DEFAULT_K: usize = 10;

/// Above this many points `Auto` switches to the kd-tree.
pub const KDTREE_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnBackend {
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

/// Every neighbour search goes through this so brute force and the tree
/// produce bitwise-identical distances.
#[inline]
fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub fn build_knn_graph(features: &FeatureMatrix, k: usize) -> Result<Graph> {
    build_knn_graph_with(features, k, KnnBackend::Auto)
}

/// KNN graph where all points tied at the K-th distance are kept.
pub fn build_knn_graph_with(features: &FeatureMatrix, k: usize, backend: KnnBackend) -> Result<Graph> {
    let m = features.rows();
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("K must satisfy 1 <= K < M (K = {k}, M = {m})")));
    }
    let use_tree = match backend {
        KnnBackend::Auto => m > KDTREE_THRESHOLD,
        KnnBackend::BruteForce => false,
        KnnBackend::KdTree => true,
    };
    // (d_K^2, neighbours with squared distances)
    let lists: Vec<(f64, Vec<(usize, f64)>)> = if use_tree {
        let tree = KdTree::build(features);
        (0..m).into_par_iter().map(|i| tree.neighbours(features, i, k)).collect()
    } else {
        (0..m).into_par_iter().map(|i| brute_neighbours(features, i, k)).collect()
    };

    let dup: Vec<usize> = lists.iter().enumerate().filter(|(_, (dk, _))| *dk == 0.0).map(|(i, _)| i).collect();
    if !dup.is_empty() {
        return Err(Error::DuplicatePoints { vertices: dup });
    }

    let directed = CsrMatrix::from_triplets(
        m,
        m,
        lists
            .iter()
            .enumerate()
            .flat_map(|(i, (dk2, nb))| nb.iter().map(move |&(j, d2)| (i, j, (-4.0 * d2 / dk2).exp()))),
    )?;
    let mut t = Vec::with_capacity(2 * directed.nnz());
    for (i, j, w) in directed.triplets() {
        let back = directed.get(j, i);
        if back == 0.0 || i < j {
            let s = 0.5 * (w + back);
            t.push((i, j, s));
            t.push((j, i, s));
        }
    }
    let adjacency = CsrMatrix::from_triplets(m, m, t)?;
    Ok(Graph::from_adjacency_unchecked(adjacency))
}

/// Directed neighbour list of `i` before symmetrization, with weights.
pub(crate) fn brute_neighbours(features: &FeatureMatrix, i: usize, k: usize) -> (f64, Vec<(usize, f64)>) {
    let xi = features.row(i);
    let d: Vec<(usize, f64)> =
        (0..features.rows()).filter(|&j| j != i).map(|j| (j, sqdist(xi, features.row(j)))).collect();
    let mut vals: Vec<f64> = d.iter().map(|&(_, v)| v).collect();
    let (_, kth, _) = vals.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    let dk2 = *kth;
    (dk2, d.into_iter().filter(|&(_, v)| v <= dk2).collect())
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Exact kd-tree over the rows of a feature matrix.
struct KdTree {
    order: Vec<usize>,
    root: Node,
}

impl KdTree {
    fn build(f: &FeatureMatrix) -> Self {
        let mut order: Vec<usize> = (0..f.rows()).collect();
        let n = order.len();
        let root = Self::build_node(f, &mut order, 0, n);
        KdTree { order, root }
    }

    fn build_node(f: &FeatureMatrix, order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for a in 0..f.dim() {
            let (lo, hi) = slice
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(f.row(i)[a]), hi.max(f.row(i)[a])));
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = a;
            }
        }
        if best_spread <= 0.0 {
            return Node::Leaf { start, end };
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| f.row(a)[best_axis].total_cmp(&f.row(b)[best_axis]).then(a.cmp(&b)));
        let value = f.row(slice[mid])[best_axis];
        let left = Self::build_node(f, order, start, start + mid);
        let right = Self::build_node(f, order, start + mid, end);
        Node::Split { axis: best_axis, value, left: Box::new(left), right: Box::new(right) }
    }

    fn neighbours(&self, f: &FeatureMatrix, i: usize, k: usize) -> (f64, Vec<(usize, f64)>) {
        let q = f.row(i);
        let mut heap: BinaryHeap<(OrderedFloat<f64>, usize)> = BinaryHeap::with_capacity(k + 1);
        self.knn(&self.root, f, q, i, k, &mut heap);
        let dk2 = heap.peek().map(|&(d, _)| d.0).unwrap_or(f64::INFINITY);
        let mut out = Vec::new();
        self.within(&self.root, f, q, i, dk2, &mut out);
        out.sort_by_key(|&(j, _)| j);
        (dk2, out)
    }

    fn knn(
        &self,
        node: &Node,
        f: &FeatureMatrix,
        q: &[f64],
        skip: usize,
        k: usize,
        heap: &mut BinaryHeap<(OrderedFloat<f64>, usize)>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j == skip {
                        continue;
                    }
                    let d = OrderedFloat(sqdist(q, f.row(j)));
                    if heap.len() < k {
                        heap.push((d, j));
                    } else if d.cmp(&heap.peek().unwrap().0) == Ordering::Less {
                        heap.pop();
                        heap.push((d, j));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn(near, f, q, skip, k, heap);
                let bound = diff * diff;
                if heap.len() < k || bound <= heap.peek().unwrap().0 .0 {
                    self.knn(far, f, q, skip, k, heap);
                }
            }
        }
    }

    fn within(&self, node: &Node, f: &FeatureMatrix, q: &[f64], skip: usize, r2: f64, out: &mut Vec<(usize, f64)>) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    if j == skip {
                        continue;
                    }
                    let d = sqdist(q, f.row(j));
                    if d <= r2 {
                        out.push((j, d));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within(near, f, q, skip, r2, out);
                if diff * diff <= r2 {
                    self.within(far, f, q, skip, r2, out);
                }
            }
        }
    }
}
