use hsi_manifold::classify::{nn_classify, overall_accuracy};
use hsi_manifold::datacube::{sample_reference, HsiCube, ReferenceSet};
use hsi_manifold::ensemble::{enumerate_trials, run_trial, run_trials, TrialGrid};
use hsi_manifold::features::{assemble_features, FeatureImage, SpectrumScope};
use hsi_manifold::lle::{assemble_weight_matrix, reduce_dimension};
use hsi_manifold::neighbors::{cosine_similarity, windowed_knn};
use hsi_manifold::synthetic::two_blob_scene;

fn toy_refs() -> ReferenceSet {
    // One anchor per blob, away from the boundary.
    ReferenceSet::from_entries(vec![(9, 1), (54, 2)], 0.05, 0).unwrap()
}

#[test]
fn toy_blobs_are_separable_in_raw_bands() {
    let (cube, mask) = two_blob_scene();
    let n = cube.pixels();
    let spectrum = |p: usize| (0..cube.bands()).map(|b| cube.sample(b, p) as f64).collect::<Vec<_>>();
    let mut worst_intra = f64::INFINITY;
    let mut best_inter = f64::NEG_INFINITY;
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let s = cosine_similarity(&spectrum(p), &spectrum(q));
            if mask.labels()[p] == mask.labels()[q] {
                worst_intra = worst_intra.min(s);
            } else {
                best_inter = best_inter.max(s);
            }
        }
    }
    assert!(best_inter < worst_intra, "{best_inter} vs {worst_intra}");
}

#[test]
fn toy_scene_is_perfect_for_every_trial() {
    let (cube, mask) = two_blob_scene();
    let refs = toy_refs();
    let mut imperfect = Vec::new();
    for grid in [TrialGrid::standard(), TrialGrid::ablation()] {
        for t in enumerate_trials(&grid).unwrap() {
            let map = run_trial(&cube, &t, &refs, 2, 51, 3).unwrap();
            let oa = overall_accuracy(&map, &mask, &refs).unwrap();
            if oa != 100.0 {
                imperfect.push(format!("{:?} p={} k={} d={}: {oa:.1}", t.bank, t.box_size, t.k, t.d));
            }
        }
    }
    assert!(
        imperfect.is_empty(),
        "{} of 63 trials below 100%:\n{}",
        imperfect.len(),
        imperfect.join("\n")
    );
}

#[test]
fn shared_work_runner_matches_per_trial_labels() {
    let (cube, mask) = two_blob_scene();
    let refs = sample_reference(&mask, 0.1, 4).unwrap();
    let trials = enumerate_trials(&TrialGrid::standard()).unwrap();
    let maps = run_trials(&cube, &trials, &refs, 2, 51, 3, |_, _| Ok(())).unwrap();
    assert_eq!(maps.len(), 54);
    for (t, m) in trials.iter().zip(&maps) {
        assert_eq!(
            m,
            &run_trial(&cube, t, &refs, 2, 51, 3).unwrap(),
            "trial {}",
            t.trial_id
        );
    }
}

#[test]
fn constant_cube_labels_by_tie_rule() {
    let cube = HsiCube::from_bsq(4, 4, 4, vec![2.5; 64]).unwrap();
    let refs = ReferenceSet::from_entries(vec![(5, 2), (10, 1)], 0.1, 0).unwrap();
    let t = enumerate_trials(&TrialGrid {
        scopes: vec![SpectrumScope::Whole],
        box_sizes: vec![3],
        neighbors: vec![5],
        dims: vec![2],
        bank: hsi_manifold::FilterBank::Full,
    })
    .unwrap()[0];
    let map = run_trial(&cube, &t, &refs, 2, 51, 0).unwrap();
    for (p, &l) in map.labels().iter().enumerate() {
        let expected = refs.label_of(p).unwrap_or(2);
        assert_eq!(l, expected, "pixel {p}");
    }
}

#[test]
fn translated_features_give_the_same_embedding() {
    let (cube, _) = two_blob_scene();
    let t = enumerate_trials(&TrialGrid::standard()).unwrap()[0];
    let features = assemble_features(&cube, &t.feature_params()).unwrap();
    let shifted: FeatureImage = features.map(|v| v + 7.25);
    let nbrs = windowed_knn(&features, 8, 51).unwrap();
    let a = assemble_weight_matrix(&features, &nbrs).unwrap();
    let b = assemble_weight_matrix(&shifted, &nbrs).unwrap();
    for j in 0..a.n() {
        for (x, y) in a.column_weights(j).iter().zip(b.column_weights(j)) {
            assert!((x - y).abs() <= 1e-8);
        }
    }
    let ya = reduce_dimension(&a, 4, 1).unwrap();
    let yb = reduce_dimension(&b, 4, 1).unwrap();
    let refs = toy_refs();
    assert_eq!(
        nn_classify(&ya, &refs, 8, 8, 2).unwrap(),
        nn_classify(&yb, &refs, 8, 8, 2).unwrap()
    );
}
