mod common;

use std::collections::BTreeSet;

use multireg::baselines::{
    preference, solve_naive, solve_sransac, solve_tlinkage, tanimoto_distance, SransacParams,
    TlinkageParams,
};
use multireg::init::euclidean_clusters;
use multireg::metrics;
use multireg::scenegen::{generate_scene, ObjectSpec, SceneSpec, Shape};
use multireg::{CorrespondenceSet, OUTLIER};

use common::*;

fn two_objects(seed: u64) -> CorrespondenceSet {
    generate_scene(&SceneSpec {
        objects: vec![
            ObjectSpec::shape(Shape::Box, 150)
                .with_diameter(1.0)
                .at([-2.0, 0.0, 0.0]),
            ObjectSpec::shape(Shape::Cylinder, 150)
                .with_diameter(1.0)
                .at([2.0, 0.0, 0.0]),
        ],
        noise_sigma: 0.005,
        seed,
        ..SceneSpec::default()
    })
    .unwrap()
}

#[test]
fn sransac_models_are_disjoint_and_deterministic() {
    let corrs = generate_scene(&desk_scene(21, 0.01)).unwrap();
    let params = SransacParams {
        inlier_threshold: 0.05,
        seed: 7,
        ..SransacParams::default()
    };
    let est = solve_sransac(&corrs, &params).unwrap();
    assert_eq!(est, solve_sransac(&corrs, &params).unwrap());
    // One label per point makes the models disjoint; each model owns its
    // consensus and every member fits within the threshold.
    for (id, members) in est.labeling.clusters() {
        let pose = est.hypotheses[id as usize].pose;
        assert!(members.len() >= params.min_inliers_to_continue);
        let worst = members
            .iter()
            .map(|&i| pose.residual(&corrs.items[i]))
            .fold(0.0, f64::max);
        assert!(worst < 3.0 * params.inlier_threshold, "{worst}");
    }
    assert!(est.labeling.cluster_count() >= 7);
}

#[test]
fn sransac_seed_changes_only_the_sampling() {
    let corrs = two_objects(3);
    let a = solve_sransac(
        &corrs,
        &SransacParams {
            inlier_threshold: 0.03,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let b = solve_sransac(
        &corrs,
        &SransacParams {
            inlier_threshold: 0.03,
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let gt = corrs.gt_labels.as_ref().unwrap();
    assert_eq!(metrics::iou(&a.labeling, gt).unwrap(), 1.0);
    assert_eq!(metrics::iou(&b.labeling, gt).unwrap(), 1.0);
}

#[test]
fn tlinkage_merges_two_objects() {
    let corrs = two_objects(5);
    let init = euclidean_clusters(&corrs.sources(), 20).unwrap().labeling;
    let est = solve_tlinkage(
        &corrs,
        &init,
        &TlinkageParams {
            tau_t: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    let gt = corrs.gt_labels.as_ref().unwrap();
    assert_eq!(est.labeling.cluster_count(), 2);
    assert!(metrics::iou(&est.labeling, gt).unwrap() > 0.99);
}

#[test]
fn tanimoto_and_preference_examples() {
    assert_eq!(tanimoto_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    assert_eq!(tanimoto_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    assert_eq!(tanimoto_distance(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
    assert_eq!(preference(0.0, 0.2), 1.0);
    assert!((preference(0.2, 0.2) - (-1.0f64).exp()).abs() < 1e-15);
    assert_eq!(preference(1.01, 0.2), 0.0);
}

#[test]
fn naive_fits_every_initial_cluster() {
    let corrs = two_objects(9);
    let init = euclidean_clusters(&corrs.sources(), 6).unwrap().labeling;
    let est = solve_naive(&corrs, &init).unwrap();
    let ids: BTreeSet<i32> = est
        .labeling
        .as_slice()
        .iter()
        .copied()
        .filter(|&l| l != OUTLIER)
        .collect();
    assert_eq!(ids.len(), est.hypotheses.len());
    for (id, members) in est.labeling.clusters() {
        let pose = est.hypotheses[id as usize].pose;
        let mean = members
            .iter()
            .map(|&i| pose.residual(&corrs.items[i]))
            .sum::<f64>()
            / members.len() as f64;
        assert!(mean < 0.02, "{mean}");
    }
}
