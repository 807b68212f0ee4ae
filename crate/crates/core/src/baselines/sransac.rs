use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::hard_hypothesis;
use crate::em::MultiModelEstimate;
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Labeling, RigidTransform, OUTLIER};
use crate::horn;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SransacParams {
    /// Residual (m) below which a correspondence joins the consensus.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Smallest consensus that is accepted as a new model.
    pub min_inliers_to_continue: usize,
    pub seed: u64,
}

impl Default for SransacParams {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.5,
            max_iterations: 1000,
            min_inliers_to_continue: 4,
            seed: 0,
        }
    }
}

impl SransacParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::invalid("inlier_threshold", "must be > 0"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Sequential RANSAC: find the motion with the largest consensus among the
/// remaining correspondences, refit it on that consensus, remove the
/// consensus and repeat until no model reaches `min_inliers_to_continue`.
pub fn solve_sransac(
    corrs: &CorrespondenceSet,
    params: &SransacParams,
) -> Result<MultiModelEstimate> {
    params.validate()?;
    let n = corrs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut labels = vec![OUTLIER; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut hypotheses = Vec::new();
    let min_consensus = params.min_inliers_to_continue.max(3);

    while remaining.len() >= min_consensus {
        // Draw every minimal sample up front so scoring order cannot affect
        // the random stream.
        let samples: Vec<[usize; 3]> = (0..params.max_iterations)
            .map(|_| {
                let s = index::sample(&mut rng, remaining.len(), 3);
                [
                    remaining[s.index(0)],
                    remaining[s.index(1)],
                    remaining[s.index(2)],
                ]
            })
            .collect();
        let scored = par::map_slice(&samples, |sample| {
            let pose = horn::fit_pose_subset(&corrs.items, sample).ok()?;
            Some((
                consensus_size(corrs, &remaining, &pose, params.inlier_threshold),
                pose,
            ))
        });
        // Largest consensus wins; ties go to the earliest iteration.
        let mut best: Option<(usize, RigidTransform)> = None;
        for (count, pose) in scored.into_iter().flatten() {
            if best.as_ref().is_none_or(|(c, _)| count > *c) {
                best = Some((count, pose));
            }
        }
        let Some((count, pose)) = best else { break };
        if count < min_consensus {
            break;
        }
        let consensus: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| pose.residual(&corrs.items[i]) < params.inlier_threshold)
            .collect();
        let refit = horn::fit_pose_subset(&corrs.items, &consensus).unwrap_or(pose);
        let id = hypotheses.len() as i32;
        for &i in &consensus {
            labels[i] = id;
        }
        hypotheses.push(hard_hypothesis(corrs, &consensus, refit));
        remaining.retain(|&i| labels[i] == OUTLIER);
    }

    Ok(MultiModelEstimate {
        hypotheses,
        labeling: Labeling::new(labels),
        iterations_run: 0,
    })
}

fn consensus_size(
    corrs: &CorrespondenceSet,
    pool: &[usize],
    pose: &RigidTransform,
    threshold: f64,
) -> usize {
    pool.iter()
        .filter(|&&i| pose.residual(&corrs.items[i]) < threshold)
        .count()
}
