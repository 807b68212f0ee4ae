//! T-Linkage over an initial clustering.
//!
//! Every cluster that admits a pose contributes one column of the
//! preference space. A point's preference for a column decays
//! exponentially with its residual under that column's pose and is cut to
//! zero beyond `5 τ_t`. A cluster's preference vector is the element-wise
//! minimum over its members, and the closest pair of clusters in Tanimoto
//! distance is merged (and refit) until every pair is at least `merge_stop`
//! apart.

use serde::{Deserialize, Serialize};

use crate::baselines::hard_hypothesis;
use crate::em::MultiModelEstimate;
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Labeling, RigidTransform, OUTLIER};
use crate::horn;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlinkageParams {
    /// Preference scale τ_t (m).
    pub tau_t: f64,
    /// Merging stops once the closest pair is at least this far apart.
    pub merge_stop: f64,
}

impl Default for TlinkageParams {
    fn default() -> Self {
        Self {
            tau_t: 0.2,
            merge_stop: 1.0,
        }
    }
}

impl TlinkageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_t > 0.0 && self.tau_t.is_finite()) {
            return Err(Error::invalid("tau_t", "must be > 0"));
        }
        if !(self.merge_stop > 0.0 && self.merge_stop <= 1.0) {
            return Err(Error::invalid("merge_stop", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// `exp(−d/τ_t)` for `d ≤ 5 τ_t`, zero beyond.
#[inline]
pub fn preference(d: f64, tau_t: f64) -> f64 {
    if d <= 5.0 * tau_t {
        (-d / tau_t).exp()
    } else {
        0.0
    }
}

/// `1 − ⟨u,v⟩ / (‖u‖² + ‖v‖² − ⟨u,v⟩)`; two all-zero vectors are at
/// distance 1.
pub fn tanimoto_distance(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "preference vectors differ in length");
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    let denom = uu + vv - uv;
    if denom <= 0.0 {
        return 1.0;
    }
    1.0 - uv / denom
}

struct Cluster {
    members: Vec<usize>,
    pose: Option<RigidTransform>,
}

pub fn solve_tlinkage(
    corrs: &CorrespondenceSet,
    init: &Labeling,
    params: &TlinkageParams,
) -> Result<MultiModelEstimate> {
    params.validate()?;
    if init.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: init.len(),
        });
    }
    let n = corrs.len();
    let mut clusters: Vec<Option<Cluster>> = par::map_slice(
        &init.clusters().into_values().collect::<Vec<_>>(),
        |members| {
            Some(Cluster {
                pose: horn::fit_pose_subset(&corrs.items, members).ok(),
                members: members.clone(),
            })
        },
    );
    let slots = clusters.len();

    // Point preferences, column-major: column j holds every point's
    // preference for cluster j's pose (all zero when j has no pose).
    let column = |pose: &Option<RigidTransform>| -> Vec<f64> {
        match pose {
            Some(p) => corrs
                .items
                .iter()
                .map(|c| preference(p.residual(c), params.tau_t))
                .collect(),
            None => vec![0.0; n],
        }
    };
    let mut columns: Vec<Vec<f64>> =
        par::map_slice(&clusters, |c| column(&c.as_ref().unwrap().pose));
    let cluster_pref = |members: &[usize], columns: &[Vec<f64>]| -> Vec<f64> {
        columns
            .iter()
            .map(|col| {
                members
                    .iter()
                    .map(|&i| col[i])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut prefs: Vec<Option<Vec<f64>>> = par::map_slice(&clusters, |c| {
        Some(cluster_pref(&c.as_ref().unwrap().members, &columns))
    });

    loop {
        let alive: Vec<usize> = (0..slots).filter(|&s| clusters[s].is_some()).collect();
        if alive.len() < 2 {
            break;
        }
        // Closest pair; ties to the lexicographically smallest (i, j).
        let row_best = par::map_range(alive.len(), |a| {
            let u = prefs[alive[a]].as_ref().unwrap();
            let mut best: Option<(f64, usize)> = None;
            for &j in &alive[a + 1..] {
                let d = tanimoto_distance(u, prefs[j].as_ref().unwrap());
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map(|(d, j)| (d, alive[a], j))
        });
        let Some((d, keep, gone)) =
            row_best
                .into_iter()
                .flatten()
                .fold(None, |acc: Option<(f64, usize, usize)>, cand| match acc {
                    Some(b) if b.0 <= cand.0 => Some(b),
                    _ => Some(cand),
                })
        else {
            break;
        };
        if d >= params.merge_stop {
            break;
        }

        let absorbed = clusters[gone].take().unwrap();
        prefs[gone] = None;
        let merged = clusters[keep].as_mut().unwrap();
        merged.members.extend(absorbed.members);
        merged.members.sort_unstable();
        merged.pose = horn::fit_pose_subset(&corrs.items, &merged.members).ok();

        columns[gone] = vec![0.0; n];
        columns[keep] = column(&merged.pose);
        let merged_members = merged.members.clone();
        for s in 0..slots {
            if let (Some(c), Some(p)) = (&clusters[s], prefs[s].as_mut()) {
                if s == keep {
                    continue;
                }
                p[gone] = 0.0;
                p[keep] = c
                    .members
                    .iter()
                    .map(|&i| columns[keep][i])
                    .fold(f64::INFINITY, f64::min);
            }
        }
        prefs[keep] = Some(cluster_pref(&merged_members, &columns));
    }

    let mut labels = vec![OUTLIER; n];
    let mut hypotheses = Vec::new();
    for c in clusters.into_iter().flatten() {
        let Some(pose) = c.pose else { continue };
        if c.members.len() < 3 {
            continue;
        }
        let id = hypotheses.len() as i32;
        for &i in &c.members {
            labels[i] = id;
        }
        hypotheses.push(hard_hypothesis(corrs, &c.members, pose));
    }
    Ok(MultiModelEstimate {
        hypotheses,
        labeling: Labeling::new(labels),
        iterations_run: 0,
    })
}
