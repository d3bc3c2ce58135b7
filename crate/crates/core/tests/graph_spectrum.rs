use placefm_core::graph::build_knn_graph_from_points;
use placefm_core::{normalize, FeatureMatrix, GeoPoint, NormalizedAdjacency};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<GeoPoint> {
    (0..n)
        .map(|_| GeoPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).unwrap())
        .collect()
}

fn column(v: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new(v.len(), 1, v.to_vec()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest |eigenvalue| of a symmetric operator by power iteration.
fn spectral_radius(a: &NormalizedAdjacency, rng: &mut ChaCha8Rng) -> f64 {
    let mut v: Vec<f64> = (0..a.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        // A² shares eigenvectors with A and has non-negative spectrum, which avoids
        // oscillation between ±λ.
        let w = a.mul_dense(&a.mul_dense(&column(&v)).unwrap()).unwrap();
        lambda = norm(w.values()).sqrt();
        v = w.values().to_vec();
    }
    lambda
}

#[test]
fn spectral_radius_at_most_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let n = rng.random_range(2..=200);
        let k = rng.random_range(1..=8);
        let g = build_knn_graph_from_points(&random_points(&mut rng, n), k).unwrap();
        let a = normalize(&g);
        let rho = spectral_radius(&a, &mut rng);
        assert!(rho <= 1.0 + 1e-9, "trial {trial}: n={n} k={k} radius {rho}");
        // The top eigenvalue of this normalization is exactly 1 (eigenvector D^1/2·1).
        assert!(rho > 1.0 - 1e-3, "trial {trial}: radius {rho}");
    }
}

#[test]
fn normalized_adjacency_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = build_knn_graph_from_points(&random_points(&mut rng, 120), 4).unwrap();
    let dense = normalize(&g).to_dense();
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, dense[j][i]);
        }
        assert!(row[i] > 0.0);
    }
}

#[test]
fn degree_lower_bound_on_clustered_points() {
    // Many exact duplicates stress the tie-breaking path.
    let mut pts = Vec::new();
    for i in 0..40 {
        let p = GeoPoint::new((i % 4) as f64 * 0.01, 0.0).unwrap();
        pts.push(p);
    }
    for k in [1, 3, 9, 39, 50] {
        let g = build_knn_graph_from_points(&pts, k).unwrap();
        for i in 0..pts.len() {
            assert!(g.degree(i) >= k.min(pts.len() - 1));
        }
    }
}
