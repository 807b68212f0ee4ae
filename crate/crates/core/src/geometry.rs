//! Shared geometric types: points, rigid transforms, correspondences and
//! labelings.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Label reserved for outliers / background points.
pub const OUTLIER: i32 = -1;

/// Entry-wise tolerance for accepting a matrix as a rotation as-is.
const ORTHO_TOL: f64 = 1e-9;
/// Drift below this is projected back onto SO(3) instead of rejected.
const ORTHO_REPAIR: f64 = 1e-6;

/// A proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is orthonormal with
    /// determinant +1. Small drift (below 1e-6) is projected onto the
    /// nearest rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::NotARotation { drift: f64::NAN });
        }
        let drift = rotation_drift(&rotation);
        let rotation = if drift <= ORTHO_TOL {
            rotation
        } else if drift < ORTHO_REPAIR {
            nearest_rotation(&rotation)
        } else {
            return Err(Error::NotARotation { drift });
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Rotation from a scaled axis (axis * angle).
    pub fn from_scaled_axis(scaled_axis: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::new(scaled_axis).matrix(),
            translation,
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle, Vector3::zeros())
    }

    /// Row-major rotation entries followed by the translation.
    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from_column_slice(translation),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Misfit `‖b − (R a + t)‖` of a correspondence under this motion.
    #[inline]
    pub fn residual(&self, c: &Correspondence) -> f64 {
        self.residual_sq(c).sqrt()
    }

    #[inline]
    pub fn residual_sq(&self, c: &Correspondence) -> f64 {
        (c.b.coords - self.rotation * c.a.coords - self.translation).norm_squared()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let rotation = self.rotation * other.rotation;
        let rotation = if rotation_drift(&rotation) > ORTHO_TOL {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord {
            rotation: self.rotation_row_major(),
            translation: self.translation_array(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PoseRecord::deserialize(d)?;
        RigidTransform::from_row_major(&rec.rotation, &rec.translation)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    rotation: [f64; 9],
    translation: [f64; 3],
}

/// Max entry-wise deviation of `RᵀR` from identity and of `det R` from 1.
fn rotation_drift(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ortho.max((r.determinant() - 1.0).abs())
}

/// Closest proper rotation in Frobenius norm.
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Geodesic angle between two rotations, in `[0, π]`.
pub fn angular_distance(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let cos = (((r1.transpose() * r2).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos()
}

/// A putative match between a point of the first cloud and its location in
/// the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub a: Point3,
    pub b: Point3,
}

impl Correspondence {
    pub fn new(a: Point3, b: Point3) -> Self {
        Self { a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Per-correspondence cluster ids with [`OUTLIER`] as the outlier sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(Vec<i32>);

impl Labeling {
    pub fn new(labels: Vec<i32>) -> Self {
        Self(labels)
    }

    pub fn uniform(n: usize, label: i32) -> Self {
        Self(vec![label; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<i32> {
        self.0
    }

    pub fn get(&self, i: usize) -> i32 {
        self.0[i]
    }

    /// Distinct non-outlier ids in ascending order.
    pub fn cluster_ids(&self) -> Vec<i32> {
        let mut ids: Vec<i32> = self.0.iter().copied().filter(|&l| l != OUTLIER).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_ids().len()
    }

    /// Member indices per cluster, keyed by id.
    pub fn clusters(&self) -> BTreeMap<i32, Vec<usize>> {
        let mut out: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.0.iter().enumerate() {
            if l != OUTLIER {
                out.entry(l).or_default().push(i);
            }
        }
        out
    }

    /// Renumbers non-outlier ids to `0..K` keeping their ascending order.
    pub fn compacted(&self) -> Labeling {
        let ids = self.cluster_ids();
        let remap: BTreeMap<i32, i32> = ids
            .iter()
            .enumerate()
            .map(|(k, &id)| (id, k as i32))
            .collect();
        Labeling(
            self.0
                .iter()
                .map(|l| remap.get(l).copied().unwrap_or(OUTLIER))
                .collect(),
        )
    }

    /// Renumbers non-outlier ids to `0..K` in order of first occurrence.
    pub fn canonicalized(&self) -> Labeling {
        let mut remap: BTreeMap<i32, i32> = BTreeMap::new();
        let labels = self
            .0
            .iter()
            .map(|&l| {
                if l == OUTLIER {
                    OUTLIER
                } else {
                    let next = remap.len() as i32;
                    *remap.entry(l).or_insert(next)
                }
            })
            .collect();
        Labeling(labels)
    }
}

impl From<Vec<i32>> for Labeling {
    fn from(v: Vec<i32>) -> Self {
        Labeling(v)
    }
}

/// Paired points `(a_i, b_i)` with optional ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub items: Vec<Correspondence>,
    pub gt_labels: Option<Labeling>,
    pub gt_poses: Option<BTreeMap<i32, RigidTransform>>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Self {
        Self {
            items,
            gt_labels: None,
            gt_poses: None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sources(&self) -> Vec<Point3> {
        self.items.iter().map(|c| c.a).collect()
    }

    /// Checks finiteness and ground-truth consistency.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.items.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "items",
                format!("correspondence {i} has non-finite coordinates"),
            ));
        }
        if let Some(gt) = &self.gt_labels {
            if gt.len() != self.items.len() {
                return Err(Error::LengthMismatch {
                    expected: self.items.len(),
                    actual: gt.len(),
                });
            }
            if let Some(poses) = &self.gt_poses {
                if let Some(id) = gt
                    .cluster_ids()
                    .into_iter()
                    .find(|id| !poses.contains_key(id))
                {
                    return Err(Error::invalid(
                        "gt_poses",
                        format!("ground-truth cluster {id} has no pose"),
                    ));
                }
            }
        }
        Ok(())
    }
}
