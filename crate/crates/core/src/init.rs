//! Initial clusterings: Euclidean (single-linkage at a bisected radius) and
//! externally produced labels.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Labeling, Point3};
use crate::spatial::{bounds, CellGrid, UnionFind};

const MAX_BISECTIONS: usize = 40;
/// Relative cluster-count deviation accepted as on target.
pub const TARGET_TOLERANCE: f64 = 0.10;
/// Beyond this relative deviation the target is reported unreachable.
pub const UNREACHABLE_TOLERANCE: f64 = 0.50;

#[derive(Debug, Clone)]
pub struct EuclideanClustering {
    pub labeling: Labeling,
    pub radius: f64,
    pub cluster_count: usize,
    /// Set when no radius came within ±50% of the requested count.
    pub target_unreachable: bool,
}

/// Single-linkage clustering whose connection radius is bisected until the
/// number of clusters hits `target_count` (or the interval collapses).
/// Labels are numbered by first occurrence.
pub fn euclidean_clusters(points: &[Point3], target_count: usize) -> Result<EuclideanClustering> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if target_count == 0 || target_count > points.len() {
        return Err(Error::invalid(
            "target_count",
            format!("must be in 1..={}, got {target_count}", points.len()),
        ));
    }
    let (min, max) = bounds(points);
    let diag = (max - min).norm();
    if diag == 0.0 {
        let labeling = Labeling::uniform(points.len(), 0);
        return Ok(EuclideanClustering {
            labeling,
            radius: 0.0,
            cluster_count: 1,
            target_unreachable: target_count as f64 > 1.5,
        });
    }

    let mut lo = 0.0;
    let mut hi = diag;
    let mut best: Option<(usize, f64, usize)> = None; // (|count - target|, radius, count)
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let count = connect(points, mid).set_count();
        let gap = count.abs_diff(target_count);
        if best.is_none_or(|(g, r, _)| gap < g || (gap == g && mid < r)) {
            best = Some((gap, mid, count));
        }
        if gap == 0 {
            break;
        }
        if count > target_count {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (gap, radius, cluster_count) = best.expect("at least one bisection step");
    let target_unreachable = gap as f64 > UNREACHABLE_TOLERANCE * target_count as f64;
    if target_unreachable {
        log::warn!(
            "euclidean clustering: target {target_count} unreachable, best {cluster_count} at r={radius:.4e}"
        );
    }
    Ok(EuclideanClustering {
        labeling: radius_labels(points, radius),
        radius,
        cluster_count,
        target_unreachable,
    })
}

/// Connected components of the graph joining points at distance `<= radius`,
/// labeled by first occurrence.
pub fn radius_labels(points: &[Point3], radius: f64) -> Labeling {
    let mut uf = connect(points, radius);
    let roots: Vec<i32> = (0..points.len()).map(|i| uf.find(i) as i32).collect();
    Labeling::new(roots).canonicalized()
}

fn connect(points: &[Point3], radius: f64) -> UnionFind {
    let mut uf = UnionFind::new(points.len());
    // Cells of edge r/√3 have diagonal r, so every cell is internally
    // connected; neighbors within r lie at most two cells away per axis.
    let grid = CellGrid::new(points, radius / 3f64.sqrt());
    let r2 = radius * radius;
    for key in grid.keys() {
        let ids = grid.members(key).expect("occupied key");
        for w in ids.windows(2) {
            uf.union(w[0], w[1]);
        }
        for dx in -2..=2i64 {
            for dy in -2..=2i64 {
                for dz in -2..=2i64 {
                    let other = (key.0 + dx, key.1 + dy, key.2 + dz);
                    if other <= *key {
                        continue;
                    }
                    let Some(others) = grid.members(&other) else {
                        continue;
                    };
                    if uf.find(ids[0]) == uf.find(others[0]) {
                        continue;
                    }
                    'pairs: for &i in ids {
                        for &j in others {
                            if (points[i] - points[j]).norm_squared() <= r2 {
                                uf.union(i, j);
                                break 'pairs;
                            }
                        }
                    }
                }
            }
        }
    }
    uf
}

/// Reads a labels CSV of `index,label` rows (optional header) whose indices
/// cover `0..n` exactly once.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Labeling> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<(usize, i32)> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        if k == 0 && record[0].eq_ignore_ascii_case("index") {
            continue;
        }
        let index: usize = record[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad index `{}`", &record[0])))?;
        let label: i32 = record[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad label `{}`", &record[1])))?;
        if label < -1 {
            return Err(Error::parse(path, line, format!("label {label} < -1")));
        }
        rows.push((index, label));
    }
    let n = rows.len();
    let mut labels = vec![0i32; n];
    let mut seen = BTreeSet::new();
    for (index, label) in rows {
        if index >= n {
            return Err(Error::Coverage {
                path: path.into(),
                msg: format!("index {index} outside 0..{n}"),
            });
        }
        if !seen.insert(index) {
            return Err(Error::Coverage {
                path: path.into(),
                msg: format!("duplicate index {index}"),
            });
        }
        labels[index] = label;
    }
    Ok(Labeling::new(labels))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}
