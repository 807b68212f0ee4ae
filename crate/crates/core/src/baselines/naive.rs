use crate::baselines::hard_hypothesis;
use crate::em::MultiModelEstimate;
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Labeling, OUTLIER};
use crate::horn;

/// One Horn fit per initial cluster. Clusters that cannot be fit (fewer
/// than three members, collinear sources) are labeled outliers.
pub fn solve_naive(corrs: &CorrespondenceSet, init: &Labeling) -> Result<MultiModelEstimate> {
    if init.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: init.len(),
        });
    }
    let mut labels = vec![OUTLIER; corrs.len()];
    let mut hypotheses = Vec::new();
    for members in init.clusters().into_values() {
        let Ok(pose) = horn::fit_pose_subset(&corrs.items, &members) else {
            continue;
        };
        let id = hypotheses.len() as i32;
        for &i in &members {
            labels[i] = id;
        }
        hypotheses.push(hard_hypothesis(corrs, &members, pose));
    }
    Ok(MultiModelEstimate {
        hypotheses,
        labeling: Labeling::new(labels),
        iterations_run: 0,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::geometry::{Correspondence, Point3, RigidTransform};

    fn scene() -> (CorrespondenceSet, RigidTransform) {
        let pose = RigidTransform::from_axis_angle(
            &Vector3::new(0.0, 1.0, 1.0),
            0.9,
            Vector3::new(2.0, 0.0, -1.0),
        );
        let items = (0..20)
            .map(|k| {
                let t = k as f64;
                let a = Point3::new(t.sin(), (2.0 * t).cos(), 0.1 * t);
                Correspondence::new(a, pose.apply(&a))
            })
            .collect();
        (CorrespondenceSet::new(items), pose)
    }

    #[test]
    fn split_object_gives_equal_poses() {
        let (corrs, pose) = scene();
        let init = Labeling::new((0..20).map(|i| i / 10).collect());
        let est = solve_naive(&corrs, &init).unwrap();
        assert_eq!(est.hypotheses.len(), 2);
        let (p, q) = (est.hypotheses[0].pose, est.hypotheses[1].pose);
        assert!((p.rotation() - q.rotation()).amax() < 1e-9);
        assert!((p.translation() - q.translation()).amax() < 1e-9);
        assert!((p.rotation() - pose.rotation()).amax() < 1e-9);
    }

    #[test]
    fn tiny_cluster_becomes_outliers() {
        let (corrs, _) = scene();
        let mut labels = vec![0; 20];
        labels[3] = 5;
        labels[7] = 5;
        let est = solve_naive(&corrs, &Labeling::new(labels)).unwrap();
        assert_eq!(est.hypotheses.len(), 1);
        assert_eq!(est.labeling.get(3), OUTLIER);
        assert_eq!(est.labeling.get(7), OUTLIER);
        assert_eq!(est.labeling.get(0), 0);
    }
}
