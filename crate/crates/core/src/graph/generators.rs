//! Synthetic graphs and point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureMatrix, Graph};
use crate::error::{Error, Result};

/// Samples with ground-truth classes and the cluster each came from.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub clusters: Vec<usize>,
}

/// Two unit-weight cliques of `clique_size` joined by one bridge edge
/// `(clique_size - 1, clique_size)`.
pub fn gen_barbell(clique_size: usize) -> Result<Graph> {
    if clique_size < 2 {
        return Err(Error::invalid("barbell cliques need at least 2 vertices"));
    }
    let s = clique_size;
    let mut edges = Vec::new();
    for off in [0, s] {
        for i in 0..s {
            for j in i + 1..s {
                edges.push((off + i, off + j, 1.0));
            }
        }
    }
    edges.push((s - 1, s, 1.0));
    Graph::from_edges(2 * s, edges)
}

pub fn gen_path(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|i| (i - 1, i, 1.0))).expect("path edges are valid")
}

/// `rows x cols` 4-neighbour grid, vertex `r * cols + c`.
pub fn gen_grid(rows: usize, cols: usize) -> Graph {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1, 1.0));
            }
            if r + 1 < rows {
                edges.push((i, i + cols, 1.0));
            }
        }
    }
    Graph::from_edges(rows * cols, edges).expect("grid edges are valid")
}

/// Uniform random recursive tree with unit weights.
pub fn gen_random_tree(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Graph::from_edges(n, (1..n).map(|i| (rng.random_range(0..i), i, 1.0))).expect("tree edges are valid")
}

/// `(cos(pi i / 4), sin(pi i / 4))` for `i = 0..8`.
pub fn ring_centers() -> Vec<[f64; 2]> {
    (0..8)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / 4.0;
            [t.cos(), t.sin()]
        })
        .collect()
}

/// Eight isotropic Gaussian clusters on the unit circle with classes
/// alternating 0, 1, 0, 1, ... around the ring.
pub fn gen_gaussian_ring(n_per_cluster: usize, sigma: f64, seed: u64) -> Result<PointCloud> {
    let centers: Vec<Vec<f64>> = ring_centers().iter().map(|c| c.to_vec()).collect();
    let classes: Vec<usize> = (0..8).map(|i| i % 2).collect();
    gen_gaussian_blobs(&centers, &classes, n_per_cluster, sigma, seed)
}

/// Isotropic Gaussian clusters around `centers`; cluster `c` gets class
/// `classes[c]`. Samples are stored cluster by cluster.
pub fn gen_gaussian_blobs(
    centers: &[Vec<f64>],
    classes: &[usize],
    n_per_cluster: usize,
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    if n_per_cluster == 0 || centers.is_empty() {
        return Err(Error::invalid("need at least one cluster with one sample"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    if classes.len() != centers.len() {
        return Err(Error::invalid("one class per center required"));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::invalid("centers must share a positive dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(centers.len() * n_per_cluster * dim);
    let mut labels = Vec::new();
    let mut clusters = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_cluster {
            for &mu in center {
                let z: f64 = normal.sample(&mut rng);
                data.push(mu + sigma * z);
            }
            labels.push(classes[c]);
            clusters.push(c);
        }
    }
    Ok(PointCloud { features: FeatureMatrix::new(labels.len(), dim, data)?, labels, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::small_sym_eig;

    #[test]
    fn barbell_sizes() {
        let g = gen_barbell(2).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (4, 3));
        let g = gen_barbell(5).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (10, 21));
        assert!(gen_barbell(1).is_err());
    }

    #[test]
    fn barbell_fiedler_splits_cliques() {
        let g = gen_barbell(5).unwrap();
        let (_, v) = small_sym_eig(&g.laplacian().to_dense_matrix());
        let f = v.column(1);
        let s0 = f[0].signum();
        for i in 0..5 {
            assert_eq!(f[i].signum(), s0);
            assert_eq!(f[i + 5].signum(), -s0);
        }
    }

    #[test]
    fn ring_defaults_shape() {
        let pc = gen_gaussian_ring(300, 0.17, 1).unwrap();
        assert_eq!(pc.features.rows(), 2400);
        assert_eq!(pc.labels.iter().filter(|&&y| y == 0).count(), 1200);
        let c0: std::collections::HashSet<_> =
            pc.clusters.iter().zip(&pc.labels).filter(|(_, &y)| y == 0).map(|(c, _)| *c).collect();
        assert_eq!(c0.len(), 4);
    }

    #[test]
    fn zero_sigma_hits_centers() {
        let pc = gen_gaussian_ring(3, 0.0, 5).unwrap();
        let centers = ring_centers();
        for i in 0..pc.features.rows() {
            assert_eq!(pc.features.row(i), &centers[pc.clusters[i]][..]);
        }
    }

    #[test]
    fn cluster_means_near_centers() {
        let n_per = 300;
        let sigma = 0.17;
        let centers = ring_centers();
        for seed in 0..10 {
            let pc = gen_gaussian_ring(n_per, sigma, seed).unwrap();
            for (c, mu) in centers.iter().enumerate() {
                for d in 0..2 {
                    let mean: f64 = (0..pc.features.rows())
                        .filter(|&i| pc.clusters[i] == c)
                        .map(|i| pc.features.row(i)[d])
                        .sum::<f64>()
                        / n_per as f64;
                    assert!((mean - mu[d]).abs() < 3.0 * sigma / (n_per as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_gaussian_ring(10, 0.17, 9).unwrap();
        let b = gen_gaussian_ring(10, 0.17, 9).unwrap();
        assert_eq!(a.features, b.features);
    }
}
