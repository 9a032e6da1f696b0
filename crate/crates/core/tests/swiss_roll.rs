use std::time::Instant;

use hsi_manifold::features::FeatureImage;
use hsi_manifold::lle::{assemble_weight_matrix, reduce_dimension};
use hsi_manifold::neighbors::euclidean_knn;
use hsi_manifold::synthetic::neighborhood_preservation;

/// 10-NN preservation of the dense solution on the same points
/// (`oracles/swiss_roll_dense.py`).
const DENSE_ORACLE_SCORE: f64 = 0.6022;

fn load_points() -> FeatureImage {
    let text = include_str!("fixtures/swiss_roll_2000.csv");
    let data: Vec<f64> = text
        .lines()
        .flat_map(|l| l.split(',').map(|v| v.trim().parse::<f64>().unwrap()))
        .collect();
    FeatureImage::new(1, data.len() / 3, 3, data).unwrap()
}

#[test]
fn swiss_roll_preserves_neighborhoods() {
    let points = load_points();
    let start = Instant::now();
    let nbrs = euclidean_knn(&points, 10).unwrap();
    let w = assemble_weight_matrix(&points, &nbrs).unwrap();
    let coords = reduce_dimension(&w, 2, 0).unwrap();
    let elapsed = start.elapsed();
    let score = neighborhood_preservation(&points, &coords, 10).unwrap();
    eprintln!(
        "preservation {score:.4} (dense {DENSE_ORACLE_SCORE}), {elapsed:?}, eigenvalues {:?}",
        coords.eigenvalues()
    );
    assert!(score >= 0.6, "score {score}");
    assert!((score - DENSE_ORACLE_SCORE).abs() <= 0.01, "score {score}");
    assert!(elapsed.as_secs_f64() <= 60.0);
}
