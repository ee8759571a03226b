//! Fast implementations against brute-force references.

use layerwise::diffusion::{
    dpt_distances, spectral_decompose, transition_operator, DiffusionConfig, EigenSolver,
};
use layerwise::neighbors::{
    knn_graph, knn_graph_blocked, symmetrize, NeighborGraph, Symmetrization,
};
use layerwise::stats::spearman;
use layerwise::synth::{gaussian_matrix, oracle_eig, oracle_knn, oracle_spearman};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn same_graph(a: &NeighborGraph, b: &NeighborGraph) {
    assert_eq!(a.n(), b.n());
    for i in 0..a.n() {
        let (x, y) = (a.neighbors(i), b.neighbors(i));
        let xi: Vec<usize> = x.iter().map(|n| n.index).collect();
        let yi: Vec<usize> = y.iter().map(|n| n.index).collect();
        assert_eq!(xi, yi, "node {i}");
        for (p, q) in x.iter().zip(y) {
            assert!((p.distance - q.distance).abs() < 1e-12, "node {i}");
        }
    }
}

#[test]
fn knn_matches_brute_force_over_50_seeds() {
    for seed in 0..50 {
        let x = gaussian_matrix(200, 8, seed);
        let k = 1 + (seed as usize % 20);
        let oracle = oracle_knn(x.view(), k).unwrap();
        same_graph(&knn_graph(x.view(), k).unwrap(), &oracle);
        same_graph(&knn_graph_blocked(x.view(), k, 17).unwrap(), &oracle);
    }
}

#[test]
fn knn_matches_brute_force_with_duplicates_and_ties() {
    // Small integer coordinates produce many exact duplicate directions.
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((150, 3), |_| rng.random_range(-2i32..=2) as f32);
        let oracle = oracle_knn(x.view(), 7).unwrap();
        same_graph(&knn_graph(x.view(), 7).unwrap(), &oracle);
    }
}

#[test]
fn spearman_matches_definition_on_100_tie_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(5..120);
        let levels = rng.random_range(2..8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] * 0.5 + rng.random_range(0..levels) as f64)
            .collect();
        let Ok(expected) = oracle_spearman(&x, &y) else {
            continue;
        };
        let got = spearman(&x, &y).unwrap().rho;
        assert!(
            (got - expected).abs() < 1e-12,
            "case {checked}: {got} vs {expected}"
        );
        checked += 1;
    }
}

fn point_cloud(n: usize, seed: u64) -> Array2<f32> {
    // A noisy spiral keeps the kNN graph connected.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 3), |(i, j)| {
        let a = 0.06 * i as f32;
        let base = [a.cos(), a.sin(), 1.0 + 0.02 * i as f32][j];
        base + 0.01 * rng.random::<f32>()
    })
}

#[test]
fn eigenpairs_match_jacobi_oracle() {
    for (seed, solver) in [
        (1, EigenSolver::Dense),
        (2, EigenSolver::Lanczos),
        (3, EigenSolver::Lanczos),
    ] {
        let n = 80 + 40 * seed as usize;
        let g = symmetrize(
            &knn_graph(point_cloud(n, seed).view(), 8).unwrap(),
            Symmetrization::Union,
        );
        let cfg = DiffusionConfig {
            solver,
            n_components: 8,
            ..Default::default()
        };
        let op = spectral_decompose(transition_operator(&g, &cfg).unwrap(), &cfg).unwrap();
        let (values, vectors) = oracle_eig(op.transition_dense().view(), 8).unwrap();
        for (i, (a, b)) in op.eigenvalues().iter().zip(&values).enumerate() {
            assert!(
                (a - b).abs() < 1e-8,
                "{solver:?} eigenvalue {i}: {a} vs {b}"
            );
        }
        for i in 0..8 {
            let gap = values
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| (v - values[i]).abs())
                .fold(f64::INFINITY, f64::min);
            if gap < 1e-4 {
                continue;
            }
            let psi = &op.eigenvectors()[i];
            let norm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = psi.iter().zip(&vectors[i]).map(|(a, b)| a * b).sum::<f64>() / norm;
            let max_err = psi
                .iter()
                .zip(&vectors[i])
                .map(|(a, b)| (a / norm - dot.signum() * b).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-8, "{solver:?} eigenvector {i}: {max_err}");
        }
    }
}

#[test]
fn dpt_increases_along_a_path() {
    let edges: Vec<(usize, usize, f64)> = (0..9)
        .flat_map(|i| [(i, i + 1, 0.1), (i + 1, i, 0.1)])
        .collect();
    let g = NeighborGraph::from_edges(10, 1, &edges, true).unwrap();
    for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
        let cfg = DiffusionConfig {
            solver,
            ..Default::default()
        };
        let op = spectral_decompose(transition_operator(&g, &cfg).unwrap(), &cfg).unwrap();
        let dpt = dpt_distances(&op, 0).unwrap().dpt;
        assert_eq!(dpt[0], 0.0);
        assert!(dpt.windows(2).all(|w| w[1] > w[0]), "{solver:?}: {dpt:?}");
    }
}
