//! Weighted closed-form absolute orientation.
//!
//! Minimizes `Σ w_i ‖b_i − R a_i − t‖²` over proper rotations and
//! translations via the SVD of the weighted cross-covariance, with the sign
//! of the last singular vector flipped when the unconstrained optimum is a
//! reflection.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, RigidTransform};

/// Middle-to-largest source scatter eigenvalue ratio below which the
/// source points are treated as collinear.
pub const COLLINEAR_RATIO: f64 = 1e-12;

/// Correspondences paired with non-negative weights.
#[derive(Debug, Clone, Copy)]
pub struct WeightedCorrespondences<'a> {
    items: &'a [Correspondence],
    weights: &'a [f64],
}

impl<'a> WeightedCorrespondences<'a> {
    pub fn new(items: &'a [Correspondence], weights: &'a [f64]) -> Result<Self> {
        if items.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: items.len(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(
                "weights",
                format!("weight {w} is not finite and >= 0"),
            ));
        }
        Ok(Self { items, weights })
    }

    pub fn fit(&self) -> Result<RigidTransform> {
        fit_weighted(self.items.iter().zip(self.weights.iter().copied()))
    }
}

/// Optimal pose for weighted correspondences.
pub fn fit_pose(items: &[Correspondence], weights: &[f64]) -> Result<RigidTransform> {
    WeightedCorrespondences::new(items, weights)?.fit()
}

/// Optimal pose for the unit-weighted subset `indices` of `items`.
pub fn fit_pose_subset(items: &[Correspondence], indices: &[usize]) -> Result<RigidTransform> {
    fit_weighted(indices.iter().map(|&i| (&items[i], 1.0)))
}

/// Two-pass weighted fit over any re-iterable sequence of pairs.
pub fn fit_weighted<'c, I>(pairs: I) -> Result<RigidTransform>
where
    I: Iterator<Item = (&'c Correspondence, f64)> + Clone,
{
    let mut total = 0.0;
    let mut positive = 0usize;
    let mut sum_a = Vector3::zeros();
    let mut sum_b = Vector3::zeros();
    for (c, w) in pairs.clone() {
        if w > 0.0 {
            positive += 1;
            total += w;
            sum_a += w * c.a.coords;
            sum_b += w * c.b.coords;
        }
    }
    if positive < 3 || total <= 0.0 {
        return Err(Error::DegenerateInput("fewer than 3 positive-weight pairs"));
    }
    let mean_a = sum_a / total;
    let mean_b = sum_b / total;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (c, w) in pairs {
        if w > 0.0 {
            let da = c.a.coords - mean_a;
            let db = c.b.coords - mean_b;
            cross += w * da * db.transpose();
            scatter += w * da * da.transpose();
        }
    }

    // Collinear sources leave two vanishing scatter eigenvalues; coplanar
    // ones (a single zero) still pin down the rotation.
    let mut eig: Vec<f64> = SymmetricEigen::new(scatter)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    let (mid, hi) = (eig[1], eig[2]);
    if !(hi > 0.0) || mid < COLLINEAR_RATIO * hi {
        return Err(Error::DegenerateInput("source points are collinear"));
    }

    // cross = U S Vᵀ, R = V diag(1, 1, d) Uᵀ
    let svd = SVD::new(cross, true, true);
    let u = svd.u.ok_or(Error::DegenerateInput("svd failed"))?;
    let v = svd
        .v_t
        .ok_or(Error::DegenerateInput("svd failed"))?
        .transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = mean_b - rotation * mean_a;
    RigidTransform::new(rotation, translation)
}

/// Weighted sum of squared residuals.
pub fn weighted_cost(pose: &RigidTransform, items: &[Correspondence], weights: &[f64]) -> f64 {
    items
        .iter()
        .zip(weights)
        .map(|(c, w)| w * pose.residual_sq(c))
        .sum()
}
