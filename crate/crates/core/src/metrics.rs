//! Segmentation and motion metrics: IoU, per-point (Chamfer) error and
//! intersection-weighted rotation / translation errors.
//!
//! Every metric matches an estimated cluster to the ground-truth cluster
//! sharing the most points with it (ties to the smaller ground-truth id).
//! Points labeled [`OUTLIER`] are left out of both segmentations. An
//! estimated cluster made only of ground-truth outliers has no match: it
//! scores an IoU of 0 and is skipped by the distance metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angular_distance, CorrespondenceSet, Labeling, Point3, RigidTransform, OUTLIER,
};
use crate::par;
use crate::spatial::NearestIndex;

/// Labels with one pose per non-outlier label.
#[derive(Debug, Clone, Copy)]
pub struct Segmentation<'a> {
    pub labels: &'a Labeling,
    pub poses: &'a BTreeMap<i32, RigidTransform>,
}

impl<'a> Segmentation<'a> {
    pub fn new(labels: &'a Labeling, poses: &'a BTreeMap<i32, RigidTransform>) -> Self {
        Self { labels, poses }
    }

    fn pose(&self, id: i32) -> Result<&RigidTransform> {
        self.poses
            .get(&id)
            .ok_or_else(|| Error::invalid("poses", format!("cluster {id} has no pose")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub est: i32,
    pub gt: i32,
    /// `|H_est ∩ G_gt| / |H_est|`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub per_point_error: f64,
    pub rotation_error: f64,
    pub translation_error: f64,
    pub matched_pairs: Vec<MatchedPair>,
    /// Share of estimated outliers that are ground-truth outliers.
    pub outlier_precision: Option<f64>,
    /// Share of ground-truth outliers labeled outliers by the estimate.
    pub outlier_recall: Option<f64>,
}

/// Intersection sizes `|H_e ∩ G_g|` plus cluster sizes.
struct Overlap {
    pairs: BTreeMap<(i32, i32), usize>,
    est_sizes: BTreeMap<i32, usize>,
    gt_sizes: BTreeMap<i32, usize>,
}

fn overlap(est: &Labeling, gt: &Labeling) -> Result<Overlap> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: est.len(),
        });
    }
    let mut pairs = BTreeMap::new();
    let mut est_sizes = BTreeMap::new();
    let mut gt_sizes = BTreeMap::new();
    for (&e, &g) in est.as_slice().iter().zip(gt.as_slice()) {
        if e != OUTLIER {
            *est_sizes.entry(e).or_insert(0) += 1;
        }
        if g != OUTLIER {
            *gt_sizes.entry(g).or_insert(0) += 1;
        }
        if e != OUTLIER && g != OUTLIER {
            *pairs.entry((e, g)).or_insert(0) += 1;
        }
    }
    Ok(Overlap {
        pairs,
        est_sizes,
        gt_sizes,
    })
}

impl Overlap {
    /// Best-overlapping gt cluster per est cluster (`None` when the est
    /// cluster touches no gt cluster).
    fn matches(&self) -> BTreeMap<i32, Option<(i32, usize)>> {
        let mut out: BTreeMap<i32, Option<(i32, usize)>> =
            self.est_sizes.keys().map(|&e| (e, None)).collect();
        // pairs iterate in ascending (est, gt), so strict > keeps the
        // smallest gt id on ties.
        for (&(e, g), &count) in &self.pairs {
            let slot = out.get_mut(&e).expect("est id present");
            if slot.is_none_or(|(_, c)| count > c) {
                *slot = Some((g, count));
            }
        }
        out
    }
}

/// Estimated cluster → ground-truth cluster with the largest intersection.
/// Estimated clusters that share no point with any ground-truth cluster are
/// absent from the map.
pub fn match_clusters(est: &Labeling, gt: &Labeling) -> Result<BTreeMap<i32, i32>> {
    Ok(overlap(est, gt)?
        .matches()
        .into_iter()
        .filter_map(|(e, m)| m.map(|(g, _)| (e, g)))
        .collect())
}

/// Mean over estimated clusters of `|H ∩ G| / |H ∪ G|` with `G` the
/// matched ground-truth cluster.
pub fn iou(est: &Labeling, gt: &Labeling) -> Result<f64> {
    let ov = overlap(est, gt)?;
    if ov.est_sizes.is_empty() {
        return Err(Error::NoClusters);
    }
    let matches = ov.matches();
    let total: f64 = matches
        .iter()
        .map(|(e, m)| match m {
            Some((g, inter)) => {
                let union = ov.est_sizes[e] + ov.gt_sizes[g] - inter;
                *inter as f64 / union as f64
            }
            None => 0.0,
        })
        .sum();
    Ok(total / matches.len() as f64)
}

/// Symmetric Chamfer distance
/// `½ (mean_p min_q ‖p−q‖ + mean_q min_p ‖q−p‖)`.
pub fn chamfer(p: &[Point3], q: &[Point3]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(0.5 * (directed_mean(p, q) + directed_mean(q, p)))
}

fn directed_mean(from: &[Point3], to: &[Point3]) -> f64 {
    let index = NearestIndex::new(to);
    let total: f64 = from.iter().map(|x| index.nearest(x).1).sum();
    total / from.len() as f64
}

fn transformed(corrs: &CorrespondenceSet, members: &[usize], pose: &RigidTransform) -> Vec<Point3> {
    members
        .iter()
        .map(|&i| pose.apply(&corrs.items[i].a))
        .collect()
}

/// Average Chamfer distance between each estimated object (sources moved
/// by its estimated pose) and its matched ground-truth object (sources
/// moved by the ground-truth pose).
pub fn per_point_error(
    corrs: &CorrespondenceSet,
    gt: Segmentation,
    est: Segmentation,
) -> Result<f64> {
    check_len(corrs, gt.labels)?;
    check_len(corrs, est.labels)?;
    let ov = overlap(est.labels, gt.labels)?;
    let gt_clusters = gt.labels.clusters();
    let est_clusters = est.labels.clusters();
    let jobs: Vec<(i32, i32)> = ov
        .matches()
        .into_iter()
        .filter_map(|(e, m)| m.map(|(g, _)| (e, g)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::NoClusters);
    }
    let poses = jobs
        .iter()
        .map(|&(e, g)| Ok((*est.pose(e)?, *gt.pose(g)?)))
        .collect::<Result<Vec<_>>>()?;
    let distances = par::map_range(jobs.len(), |k| {
        let (e, g) = jobs[k];
        let (est_pose, gt_pose) = &poses[k];
        let moved_est = transformed(corrs, &est_clusters[&e], est_pose);
        let moved_gt = transformed(corrs, &gt_clusters[&g], gt_pose);
        chamfer(&moved_est, &moved_gt)
    });
    let mut total = 0.0;
    for d in distances {
        total += d?;
    }
    Ok(total / jobs.len() as f64)
}

/// Intersection weights `|H_e ∩ G_g| / |H_e|` for every intersecting pair,
/// ordered by `(est, gt)`.
pub fn intersection_weights(est: &Labeling, gt: &Labeling) -> Result<Vec<MatchedPair>> {
    let ov = overlap(est, gt)?;
    Ok(ov
        .pairs
        .iter()
        .map(|(&(e, g), &count)| MatchedPair {
            est: e,
            gt: g,
            weight: count as f64 / ov.est_sizes[&e] as f64,
        })
        .collect())
}

/// Mean over estimated clusters of the intersection-weighted angular and
/// translation errors against every overlapping ground-truth cluster.
pub fn pose_errors(gt: Segmentation, est: Segmentation) -> Result<(f64, f64)> {
    let weights = intersection_weights(est.labels, gt.labels)?;
    let mut per_est: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for pair in &weights {
        let e = est.pose(pair.est)?;
        let g = gt.pose(pair.gt)?;
        let slot = per_est.entry(pair.est).or_insert((0.0, 0.0));
        slot.0 += pair.weight * angular_distance(e.rotation(), g.rotation());
        slot.1 += pair.weight * (e.translation() - g.translation()).norm();
    }
    if per_est.is_empty() {
        return Err(Error::NoClusters);
    }
    let k = per_est.len() as f64;
    let (rot, trans) = per_est
        .values()
        .fold((0.0, 0.0), |(r, t), (er, et)| (r + er, t + et));
    Ok((rot / k, trans / k))
}

fn check_len(corrs: &CorrespondenceSet, labels: &Labeling) -> Result<()> {
    if labels.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// All metrics for one estimate.
pub fn evaluate(
    corrs: &CorrespondenceSet,
    gt: Segmentation,
    est: Segmentation,
) -> Result<MetricsReport> {
    check_len(corrs, gt.labels)?;
    check_len(corrs, est.labels)?;
    let iou = iou(est.labels, gt.labels)?;
    let per_point_error = per_point_error(corrs, gt, est)?;
    let (rotation_error, translation_error) = pose_errors(gt, est)?;
    let matched_pairs = intersection_weights(est.labels, gt.labels)?;

    let (mut both, mut est_out, mut gt_out) = (0usize, 0usize, 0usize);
    for (&e, &g) in est.labels.as_slice().iter().zip(gt.labels.as_slice()) {
        est_out += (e == OUTLIER) as usize;
        gt_out += (g == OUTLIER) as usize;
        both += (e == OUTLIER && g == OUTLIER) as usize;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(MetricsReport {
        iou,
        per_point_error,
        rotation_error,
        translation_error,
        matched_pairs,
        outlier_precision: ratio(both, est_out),
        outlier_recall: ratio(both, gt_out),
    })
}
