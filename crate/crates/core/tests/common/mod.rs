#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multireg::scenegen::{ObjectSpec, SceneSpec, Shape};
use multireg::{angular_distance, Correspondence, Labeling, Point3, RigidTransform, OUTLIER};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seven desk-sized procedural objects, 300 points each.
pub fn desk_scene(seed: u64, noise: f64) -> SceneSpec {
    SceneSpec {
        objects: (0..7)
            .map(|i| ObjectSpec::shape(Shape::ALL[i % 4], 300).with_diameter(1.0))
            .collect(),
        noise_sigma: noise,
        seed,
        ..SceneSpec::default()
    }
}

/// Desk scene packed tightly enough that proximity clusters bridge
/// neighbouring objects.
pub fn packed_scene(seed: u64, noise: f64) -> SceneSpec {
    SceneSpec {
        layout_half_extent: 1.2,
        min_gap: 0.02,
        ..desk_scene(seed, noise)
    }
}

/// Four objects; objects 0 and 1 share one motion and sit 8 m apart.
pub fn shared_motion_scene(seed: u64, noise: f64) -> SceneSpec {
    let centers = [
        [-4.0, 0.0, 0.0],
        [4.0, 0.0, 0.0],
        [0.0, 4.0, 0.0],
        [0.0, -4.0, 0.0],
    ];
    SceneSpec {
        objects: (0..4)
            .map(|i| {
                ObjectSpec::shape(Shape::ALL[i], 300)
                    .with_diameter(1.0)
                    .at(centers[i])
            })
            .collect(),
        noise_sigma: noise,
        shared_motion_groups: vec![vec![0, 1]],
        seed,
        ..SceneSpec::default()
    }
}

pub fn random_pose(rng: &mut impl Rng, spread: f64) -> RigidTransform {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let t = Vector3::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
    );
    RigidTransform::from_axis_angle(&axis, angle, t)
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Point3 {
    Point3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

pub fn gaussian(rng: &mut impl Rng, sigma: f64) -> Vector3<f64> {
    use rand_distr::{Distribution, Normal};
    let n = Normal::new(0.0, sigma).unwrap();
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Random labeling with ids in `0..k` and roughly `outliers` fraction of −1.
pub fn random_labels(rng: &mut impl Rng, n: usize, k: i32, outliers: f64) -> Labeling {
    Labeling::new(
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < outliers {
                    OUTLIER
                } else {
                    rng.random_range(0..k)
                }
            })
            .collect(),
    )
}

pub fn weighted_cost(pose: &RigidTransform, items: &[Correspondence], w: &[f64]) -> f64 {
    items
        .iter()
        .zip(w)
        .map(|(c, w)| w * pose.residual_sq(c))
        .sum()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Levenberg-Marquardt on `Σ w ‖b − R a − t‖²` with left-multiplicative
/// rotation updates, started at `start`. Returns the refined cost.
pub fn levenberg_marquardt(start: &RigidTransform, items: &[Correspondence], w: &[f64]) -> f64 {
    let mut rot = *start.rotation();
    let mut t = *start.translation();
    let cost = |r: &Matrix3<f64>, t: &Vector3<f64>| -> f64 {
        items
            .iter()
            .zip(w)
            .map(|(c, w)| w * (c.b.coords - r * c.a.coords - t).norm_squared())
            .sum()
    };
    let mut current = cost(&rot, &t);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for (c, &wi) in items.iter().zip(w) {
            let ra = rot * c.a.coords;
            let r = c.b.coords - ra - t;
            // r(δ, dt) ≈ r + [Ra]× δ − dt
            let mut j = nalgebra::Matrix3x6::<f64>::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&ra));
            j.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-Matrix3::identity()));
            jtj += wi * j.transpose() * j;
            jtr += wi * j.transpose() * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj;
            for d in 0..6 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let delta = Vector3::new(step[0], step[1], step[2]);
            let dt = Vector3::new(step[3], step[4], step[5]);
            let r_new = nalgebra::Rotation3::from_scaled_axis(delta).into_inner() * rot;
            let t_new = t + dt;
            let c_new = cost(&r_new, &t_new);
            if c_new < current {
                rot = r_new;
                t = t_new;
                current = c_new;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    current
}

pub fn brute_chamfer(p: &[Point3], q: &[Point3]) -> f64 {
    let directed = |from: &[Point3], to: &[Point3]| -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| (x - y).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(p, q) + directed(q, p))
}

fn members(labels: &Labeling, id: i32) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels.get(i) == id).collect()
}

fn ids(labels: &Labeling) -> Vec<i32> {
    let mut v: Vec<i32> = labels
        .as_slice()
        .iter()
        .copied()
        .filter(|&l| l != OUTLIER)
        .collect();
    v.sort();
    v.dedup();
    v
}

/// Exhaustive match: for each est cluster, scan every gt id and count.
pub fn brute_match(est: &Labeling, gt: &Labeling) -> BTreeMap<i32, i32> {
    let mut out = BTreeMap::new();
    for e in ids(est) {
        let h = members(est, e);
        let mut best: Option<(i32, usize)> = None;
        for g in ids(gt) {
            let inter = h.iter().filter(|&&i| gt.get(i) == g).count();
            if inter > 0 && best.is_none_or(|(_, b)| inter > b) {
                best = Some((g, inter));
            }
        }
        if let Some((g, _)) = best {
            out.insert(e, g);
        }
    }
    out
}

pub fn brute_iou(est: &Labeling, gt: &Labeling) -> f64 {
    let matched = brute_match(est, gt);
    let est_ids = ids(est);
    let mut total = 0.0;
    for &e in &est_ids {
        if let Some(&g) = matched.get(&e) {
            let h = members(est, e);
            let gg = members(gt, g);
            let inter = h.iter().filter(|i| gg.contains(i)).count();
            let union = h.len() + gg.len() - inter;
            total += inter as f64 / union as f64;
        }
    }
    total / est_ids.len() as f64
}

pub fn brute_weights(est: &Labeling, gt: &Labeling) -> Vec<(i32, i32, f64)> {
    let mut out = Vec::new();
    for e in ids(est) {
        let h = members(est, e);
        for g in ids(gt) {
            let inter = h.iter().filter(|&&i| gt.get(i) == g).count();
            if inter > 0 {
                out.push((e, g, inter as f64 / h.len() as f64));
            }
        }
    }
    out
}

pub fn brute_pose_errors(
    est: &Labeling,
    est_poses: &BTreeMap<i32, RigidTransform>,
    gt: &Labeling,
    gt_poses: &BTreeMap<i32, RigidTransform>,
) -> (f64, f64) {
    let mut per: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for (e, g, w) in brute_weights(est, gt) {
        let (pe, pg) = (&est_poses[&e], &gt_poses[&g]);
        let slot = per.entry(e).or_default();
        slot.0 += w * angular_distance(pe.rotation(), pg.rotation());
        slot.1 += w * (pe.translation() - pg.translation()).norm();
    }
    let k = per.len() as f64;
    let (r, t) = per
        .values()
        .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    (r / k, t / k)
}
