mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use multireg::horn::{fit_pose, WeightedCorrespondences};
use multireg::{Correspondence, Point3, RigidTransform};

use common::*;

fn instance(seed: u64, n: usize, noise: f64) -> (RigidTransform, Vec<Correspondence>, Vec<f64>) {
    let mut rng = rng(seed);
    let pose = random_pose(&mut rng, 5.0);
    let items = (0..n)
        .map(|_| {
            let a = random_point(&mut rng, 2.0);
            Correspondence::new(a, pose.apply(&a) + gaussian(&mut rng, noise))
        })
        .collect();
    let w = (0..n)
        .map(|_| rand::Rng::random_range(&mut rng, 0.1..2.0))
        .collect();
    (pose, items, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_equivariant(seed in 0u64..10_000) {
        let mut r = rng(seed ^ 0xabc);
        let (_, items, w) = instance(seed, 30, 0.05);
        let fit = fit_pose(&items, &w).unwrap();
        // Moving the targets by g composes g onto the optimum.
        let g = random_pose(&mut r, 3.0);
        let moved: Vec<_> = items.iter().map(|c| Correspondence::new(c.a, g.apply(&c.b))).collect();
        let fit_moved = fit_pose(&moved, &w).unwrap();
        let expect = g.compose(&fit);
        prop_assert!((fit_moved.rotation() - expect.rotation()).amax() < 1e-9);
        prop_assert!((fit_moved.translation() - expect.translation()).amax() < 1e-8);
    }

    #[test]
    fn uniform_weight_scaling_is_invisible(seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let (_, items, w) = instance(seed, 25, 0.05);
        let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
        let a = fit_pose(&items, &w).unwrap();
        let b = fit_pose(&items, &scaled).unwrap();
        prop_assert!((a.rotation() - b.rotation()).amax() < 1e-10);
        prop_assert!((a.translation() - b.translation()).amax() < 1e-9);
    }

    #[test]
    fn reflected_targets_still_give_a_rotation(seed in 0u64..10_000) {
        let (_, items, w) = instance(seed, 20, 0.0);
        let mirrored: Vec<_> = items
            .iter()
            .map(|c| Correspondence::new(c.a, Point3::new(c.b.x, c.b.y, -c.b.z)))
            .collect();
        let fit = fit_pose(&mirrored, &w).unwrap();
        let r = fit.rotation();
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn noiseless_fit_recovers_generator(seed in 0u64..10_000) {
        let (pose, items, w) = instance(seed, 12, 0.0);
        let fit = fit_pose(&items, &w).unwrap();
        prop_assert!((fit.rotation() - pose.rotation()).amax() < 1e-9);
        prop_assert!((fit.translation() - pose.translation()).amax() < 1e-8);
    }
}

#[test]
fn refinement_cannot_improve_the_closed_form() {
    for seed in 0..30 {
        let (_, items, w) = instance(seed, 50, 0.01);
        let fit = fit_pose(&items, &w).unwrap();
        let before = weighted_cost(&fit, &items, &w);
        let after = levenberg_marquardt(&fit, &items, &w);
        assert!(
            (before - after) / before < 1e-8,
            "seed {seed}: {before} -> {after}"
        );
        // A perturbed start converges back to the same cost.
        let off = RigidTransform::from_scaled_axis(
            Vector3::new(0.05, -0.03, 0.02),
            Vector3::new(0.1, 0.0, -0.1),
        )
        .compose(&fit);
        let from_off = levenberg_marquardt(&off, &items, &w);
        assert!(from_off >= before * (1.0 - 1e-8));
    }
}

#[test]
fn weights_are_validated() {
    let (_, items, _) = instance(1, 5, 0.0);
    assert!(WeightedCorrespondences::new(&items, &[1.0; 4]).is_err());
    assert!(WeightedCorrespondences::new(&items, &[1.0, 1.0, f64::NAN, 1.0, 1.0]).is_err());
    assert!(
        WeightedCorrespondences::new(&items, &[1.0, 1.0, 0.0, 1.0, 1.0])
            .unwrap()
            .fit()
            .is_ok()
    );
    assert!(fit_pose(&items, &[0.0, 0.0, 1.0, 1.0, 0.0]).is_err());
}
