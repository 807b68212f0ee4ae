//! Synthetic multi-object scenes: object clouds (procedural or loaded),
//! one random rigid motion per object (shared within motion groups),
//! Gaussian noise on the second cloud and uniform outlier pairs.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    Correspondence, CorrespondenceSet, Labeling, Point3, RigidTransform, OUTLIER,
};
use crate::io;
use crate::spatial::bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box,
    SphereShell,
    Cylinder,
    LBracket,
}

impl Shape {
    pub const ALL: [Shape; 4] = [
        Shape::Box,
        Shape::SphereShell,
        Shape::Cylinder,
        Shape::LBracket,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectSource {
    Shape { shape: Shape },
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(flatten)]
    pub source: ObjectSource,
    /// Number of points; files are subsampled to this count when larger.
    #[serde(default)]
    pub points: Option<usize>,
    /// Bounding-sphere diameter (m). Loaded clouds are rescaled only when
    /// this is given.
    #[serde(default)]
    pub diameter: Option<f64>,
    /// Object center in the first cloud; placed randomly when absent.
    #[serde(default)]
    pub center: Option<[f64; 3]>,
}

impl ObjectSpec {
    pub fn shape(shape: Shape, points: usize) -> Self {
        Self {
            source: ObjectSource::Shape { shape },
            points: Some(points),
            diameter: None,
            center: None,
        }
    }

    pub fn with_diameter(mut self, d: f64) -> Self {
        self.diameter = Some(d);
        self
    }

    pub fn at(mut self, center: [f64; 3]) -> Self {
        self.center = Some(center);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation (m) of the isotropic noise added to `b`.
    pub noise_sigma: f64,
    /// Objects within a group receive the identical motion.
    pub shared_motion_groups: Vec<Vec<usize>>,
    /// Outlier pairs appended, as a fraction of the inlier count.
    pub outlier_fraction: f64,
    /// Translations are drawn uniformly from `[-h, h]³` (m).
    pub translation_half_extent: f64,
    /// Random object centers are drawn from `[-h, h]³` (m).
    pub layout_half_extent: f64,
    /// Minimum clearance (m) between randomly placed objects.
    pub min_gap: f64,
    /// Default diameter (m) of procedural objects.
    pub default_diameter: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            objects: Vec::new(),
            noise_sigma: 0.0,
            shared_motion_groups: Vec::new(),
            outlier_fraction: 0.0,
            translation_half_extent: 5.0,
            layout_half_extent: 5.0,
            min_gap: 0.5,
            default_diameter: 3.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::invalid("objects", "at least one object required"));
        }
        for o in &self.objects {
            if o.points.is_some_and(|p| p < 4) {
                return Err(Error::invalid(
                    "objects.points",
                    "each object needs >= 4 points",
                ));
            }
            if matches!(o.source, ObjectSource::Shape { .. }) && o.points.is_none() {
                return Err(Error::invalid(
                    "objects.points",
                    "procedural objects need a point count",
                ));
            }
            if o.diameter.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
                return Err(Error::invalid("objects.diameter", "must be > 0"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction", "must be in [0, 1)"));
        }
        if !(self.default_diameter > 0.0)
            || !(self.layout_half_extent >= 0.0)
            || !(self.translation_half_extent >= 0.0)
        {
            return Err(Error::invalid(
                "default_diameter",
                "extents must be positive",
            ));
        }
        let mut seen = vec![false; self.objects.len()];
        for group in &self.shared_motion_groups {
            for &i in group {
                if i >= self.objects.len() {
                    return Err(Error::invalid(
                        "shared_motion_groups",
                        format!("object {i} does not exist"),
                    ));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid(
                        "shared_motion_groups",
                        format!("object {i} listed twice"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth written next to a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub noise_sigma: f64,
    pub seed: u64,
    pub poses: BTreeMap<i32, RigidTransform>,
    pub spec: SceneSpec,
}

/// Uniform random rotation from a uniformly sampled unit quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (s1, s2) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(
        s2 * (TAU * u3).cos(),
        s1 * (TAU * u2).sin(),
        s1 * (TAU * u2).cos(),
        s2 * (TAU * u3).sin(),
    );
    UnitQuaternion::from_quaternion(q)
}

fn uniform_in_box<R: Rng>(rng: &mut R, min: &Vector3<f64>, max: &Vector3<f64>) -> Point3 {
    Point3::new(
        lerp(rng.random(), min.x, max.x),
        lerp(rng.random(), min.y, max.y),
        lerp(rng.random(), min.z, max.z),
    )
}

fn lerp(u: f64, lo: f64, hi: f64) -> f64 {
    lo + u * (hi - lo)
}

/// Samples `count` surface points of a procedural shape centered at the
/// origin whose bounding sphere has diameter `diameter`.
pub fn sample_shape<R: Rng>(shape: Shape, count: usize, diameter: f64, rng: &mut R) -> Vec<Point3> {
    let r = diameter / 2.0;
    match shape {
        Shape::Box => {
            // Cube with half-diagonal r.
            let h = r / 3f64.sqrt();
            (0..count)
                .map(|_| {
                    let face = rng.random_range(0..6usize);
                    let (u, v) = (lerp(rng.random(), -h, h), lerp(rng.random(), -h, h));
                    let w = if face % 2 == 0 { h } else { -h };
                    match face / 2 {
                        0 => Point3::new(w, u, v),
                        1 => Point3::new(u, w, v),
                        _ => Point3::new(u, v, w),
                    }
                })
                .collect()
        }
        Shape::SphereShell => (0..count)
            .map(|_| {
                let z: f64 = lerp(rng.random(), -1.0, 1.0);
                let phi = TAU * rng.random::<f64>();
                let s = (1.0 - z * z).max(0.0).sqrt();
                Point3::new(r * s * phi.cos(), r * s * phi.sin(), r * z)
            })
            .collect(),
        Shape::Cylinder => {
            // Height equal to the diameter of the base, so the bounding
            // sphere radius is ρ√2.
            let rho = r / 2f64.sqrt();
            let half = rho;
            let side = TAU * rho * 2.0 * half;
            let cap = PI * rho * rho;
            (0..count)
                .map(|_| {
                    let phi = TAU * rng.random::<f64>();
                    let pick = rng.random::<f64>() * (side + 2.0 * cap);
                    if pick < side {
                        Point3::new(
                            rho * phi.cos(),
                            rho * phi.sin(),
                            lerp(rng.random(), -half, half),
                        )
                    } else {
                        let rad = rho * rng.random::<f64>().sqrt();
                        let z = if pick < side + cap { half } else { -half };
                        Point3::new(rad * phi.cos(), rad * phi.sin(), z)
                    }
                })
                .collect()
        }
        Shape::LBracket => {
            // Two perpendicular unit plates sharing an edge, centered on
            // their bounding cube and scaled to the bounding sphere.
            let scale = r / (3f64.sqrt() / 2.0);
            (0..count)
                .map(|_| {
                    let (u, v): (f64, f64) = (rng.random(), rng.random());
                    let p = if rng.random::<bool>() {
                        Vector3::new(u, v, 0.0)
                    } else {
                        Vector3::new(u, 0.0, v)
                    };
                    Point3::from((p - Vector3::repeat(0.5)) * scale)
                })
                .collect()
        }
    }
}

fn object_rng(seed: u64, object: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(object as u64 + 1);
    rng
}

/// Object cloud centered at the origin plus its bounding-sphere diameter.
fn object_cloud(spec: &SceneSpec, idx: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<Point3>, f64)> {
    let o = &spec.objects[idx];
    match &o.source {
        ObjectSource::Shape { shape } => {
            let d = o.diameter.unwrap_or(spec.default_diameter);
            let count = o.points.expect("validated");
            Ok((sample_shape(*shape, count, d, rng), d))
        }
        ObjectSource::File { file } => {
            let mut pts = io::load_point_cloud(file)?;
            if let Some(count) = o.points {
                if pts.len() > count {
                    let mut keep = index::sample(rng, pts.len(), count).into_vec();
                    keep.sort_unstable();
                    pts = keep.into_iter().map(|i| pts[i]).collect();
                }
            }
            if pts.len() < 4 {
                return Err(Error::invalid(
                    "objects.file",
                    format!("{} has fewer than 4 points", file.display()),
                ));
            }
            let centroid = pts.iter().map(|p| p.coords).sum::<Vector3<f64>>() / pts.len() as f64;
            let mut pts: Vec<Point3> = pts
                .into_iter()
                .map(|p| Point3::from(p.coords - centroid))
                .collect();
            let radius = pts.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
            let d = match o.diameter {
                Some(d) if radius > 0.0 => {
                    let s = d / (2.0 * radius);
                    pts.iter_mut().for_each(|p| *p = Point3::from(p.coords * s));
                    d
                }
                _ => 2.0 * radius,
            };
            Ok((pts, d))
        }
    }
}

/// Builds the correspondence set and its ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<CorrespondenceSet> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut clouds = Vec::with_capacity(spec.objects.len());
    for idx in 0..spec.objects.len() {
        let mut rng = object_rng(spec.seed, idx);
        let (pts, d) = object_cloud(spec, idx, &mut rng)?;
        clouds.push((pts, d, rng));
    }

    // Place objects without explicit centers so bounding spheres keep
    // `min_gap` clearance.
    let mut centers: Vec<Option<(Vector3<f64>, f64)>> = spec
        .objects
        .iter()
        .zip(&clouds)
        .map(|(o, (_, d, _))| o.center.map(|c| (Vector3::from(c), *d)))
        .collect();
    let h = spec.layout_half_extent;
    for idx in 0..centers.len() {
        if centers[idx].is_some() {
            continue;
        }
        let d = clouds[idx].1;
        let mut placed = None;
        for _ in 0..10_000 {
            let c = uniform_in_box(&mut master, &Vector3::repeat(-h), &Vector3::repeat(h)).coords;
            let clear = centers
                .iter()
                .flatten()
                .all(|(o, od)| (c - o).norm() >= (d + od) / 2.0 + spec.min_gap);
            if clear {
                placed = Some(c);
                break;
            }
        }
        let c = placed.ok_or_else(|| {
            Error::invalid(
                "layout_half_extent",
                format!("could not place object {idx} without overlap"),
            )
        })?;
        centers[idx] = Some((c, d));
    }

    let mut group_of: Vec<Option<usize>> = vec![None; spec.objects.len()];
    for (g, members) in spec.shared_motion_groups.iter().enumerate() {
        for &i in members {
            group_of[i] = Some(g);
        }
    }
    let th = spec.translation_half_extent;
    let mut group_pose: BTreeMap<usize, RigidTransform> = BTreeMap::new();
    let mut poses = BTreeMap::new();
    for (idx, group) in group_of.iter().enumerate() {
        let mut draw = || {
            let q = random_rotation(&mut master);
            let t = uniform_in_box(&mut master, &Vector3::repeat(-th), &Vector3::repeat(th)).coords;
            RigidTransform::new(*q.to_rotation_matrix().matrix(), t).expect("unit quaternion")
        };
        let pose = match *group {
            Some(g) => *group_pose.entry(g).or_insert_with(draw),
            None => draw(),
        };
        poses.insert(idx as i32, pose);
    }

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    let mut items = Vec::new();
    let mut labels = Vec::new();
    for (idx, (pts, _, rng)) in clouds.iter_mut().enumerate() {
        let center = centers[idx].expect("placed").0;
        let pose = poses[&(idx as i32)];
        for p in pts.iter() {
            let a = Point3::from(p.coords + center);
            let mut b = pose.apply(&a);
            if spec.noise_sigma > 0.0 {
                b += Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            }
            items.push(Correspondence::new(a, b));
            labels.push(idx as i32);
        }
    }

    let outliers = (spec.outlier_fraction * items.len() as f64).floor() as usize;
    if outliers > 0 {
        let (amin, amax) = bounds(&items.iter().map(|c| c.a).collect::<Vec<_>>());
        let (bmin, bmax) = bounds(&items.iter().map(|c| c.b).collect::<Vec<_>>());
        for _ in 0..outliers {
            let a = uniform_in_box(&mut master, &amin, &amax);
            let b = uniform_in_box(&mut master, &bmin, &bmax);
            items.push(Correspondence::new(a, b));
            labels.push(OUTLIER);
        }
    }

    Ok(CorrespondenceSet {
        items,
        gt_labels: Some(Labeling::new(labels)),
        gt_poses: Some(poses),
    })
}

/// Ground-truth sidecar for a generated scene.
pub fn scene_truth(spec: &SceneSpec, corrs: &CorrespondenceSet) -> SceneTruth {
    SceneTruth {
        noise_sigma: spec.noise_sigma,
        seed: spec.seed,
        poses: corrs.gt_poses.clone().unwrap_or_default(),
        spec: spec.clone(),
    }
}
