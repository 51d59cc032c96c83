#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stiefel_ssl::graph::{Graph, LabelSet};
use stiefel_ssl::problem::{assemble, objective, random_feasible, DenseProblem, PartitionedProblem, StiefelQuadratic};
use stiefel_ssl::ssm::{pgd_armijo, PgdConfig};

/// Connected graph on `m` vertices: a random recursive tree plus `extra`
/// random chords, weights uniform in `[0.5, 2]`.
pub fn random_graph(m: usize, extra: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in 1..m {
        let j = rng.random_range(0..i);
        seen.insert((j, i));
        edges.push((j, i, rng.random_range(0.5..2.0)));
    }
    let mut tries = 0;
    while edges.len() < m - 1 + extra && tries < 50 * (extra + 1) {
        tries += 1;
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && seen.insert((a, b)) {
            edges.push((a, b, rng.random_range(0.5..2.0)));
        }
    }
    Graph::from_edges(m, edges).unwrap()
}

/// `per_class` distinct labeled vertices for each of `k` classes.
pub fn random_labels(m: usize, k: usize, per_class: usize, rng: &mut ChaCha8Rng) -> LabelSet {
    let mut verts: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        verts.swap(i, rng.random_range(0..=i));
    }
    let entries = (0..k * per_class).map(|a| (verts[a], a % k)).collect();
    LabelSet::new(entries, k).unwrap()
}

/// Random instance with `n` unlabeled vertices and `k` classes.
pub fn random_instance(n: usize, k: usize, per_class: usize, seed: u64) -> (Graph, PartitionedProblem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = n + k * per_class;
    let extra = rng.random_range(0..=m);
    let g = random_graph(m, extra, &mut rng);
    let labels = random_labels(m, k, per_class, &mut rng);
    let prob = assemble(&g, &labels).unwrap();
    (g, prob)
}

/// The same quadratic with a dense `L`, built only from the trait surface.
pub fn densify<P: StiefelQuadratic + ?Sized>(prob: &P) -> DenseProblem {
    let l = prob.apply_l(&DMatrix::identity(prob.n(), prob.n()));
    DenseProblem::with_sqrt(l, prob.b().clone(), prob.c().clone(), prob.c_half().clone())
        .with_constraints(prob.constraints())
}

/// Brute-force minimum: `samples` random feasible points are evaluated,
/// and the `polish / 2` lowest plus `polish / 2` others spread evenly
/// through the sample are polished by Armijo PGD with Newton steps.
pub fn brute_force_min<P: StiefelQuadratic + ?Sized>(prob: &P, samples: usize, polish: usize, seed: u64) -> f64 {
    let dense = densify(prob);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<DMatrix<f64>> = (0..samples).map(|_| random_feasible(&dense, &mut rng).into_matrix()).collect();
    let values: Vec<f64> = points.iter().map(|x| objective(&dense, x)).collect();
    let mut order: Vec<usize> = (0..samples).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let half = (polish / 2).min(samples);
    let mut chosen: Vec<usize> = order[..half].to_vec();
    let stride = (samples / half.max(1)).max(1);
    chosen.extend((0..samples).step_by(stride).take(polish - half));
    let cfg = PgdConfig { max_iter: 400, foc_tol: 1e-10, newton: true, ..Default::default() };
    let polished =
        chosen.par_iter().map(|&i| pgd_armijo(&dense, &points[i], &cfg).value).reduce(|| f64::INFINITY, f64::min);
    polished.min(values[order[0]])
}
