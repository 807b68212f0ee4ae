//! Comparison methods: per-cluster Horn fits, Sequential RANSAC and
//! T-Linkage.

mod naive;
mod sransac;
mod tlinkage;

pub use naive::solve_naive;
pub use sransac::{solve_sransac, SransacParams};
pub use tlinkage::{preference, solve_tlinkage, tanimoto_distance, TlinkageParams};

use nalgebra::Vector3;

use crate::em::Hypothesis;
use crate::geometry::{CorrespondenceSet, Point3, RigidTransform};

/// Hypothesis for a hard cluster: σ is the RMS residual, the weight is the
/// cluster's share of all correspondences.
pub(crate) fn hard_hypothesis(
    corrs: &CorrespondenceSet,
    members: &[usize],
    pose: RigidTransform,
) -> Hypothesis {
    let m = members.len() as f64;
    let mut sq = 0.0;
    let mut centroid = Vector3::zeros();
    for &i in members {
        let c = &corrs.items[i];
        sq += pose.residual_sq(c);
        centroid += c.a.coords;
    }
    Hypothesis {
        pose,
        sigma: (sq / m).sqrt(),
        weight: m / corrs.len() as f64,
        centroid: Point3::from(centroid / m),
    }
}
