//! Uniform hash grid over 3D points: radius connectivity for Euclidean
//! clustering and exact nearest-neighbor queries for Chamfer distances.

use std::collections::HashMap;

use crate::geometry::Point3;

pub type CellKey = (i64, i64, i64);

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] || (self.size[ra] == self.size[rb] && rb < ra) {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

/// Points bucketed into cubic cells of edge `cell`.
#[derive(Debug, Clone)]
pub struct CellGrid {
    cell: f64,
    cells: HashMap<CellKey, Vec<usize>>,
    /// Occupied keys in sorted order, for deterministic traversal.
    keys: Vec<CellKey>,
}

impl CellGrid {
    pub fn new(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key_of(p, cell)).or_default().push(i);
        }
        let mut keys: Vec<CellKey> = cells.keys().copied().collect();
        keys.sort_unstable();
        Self { cell, cells, keys }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn keys(&self) -> &[CellKey] {
        &self.keys
    }

    pub fn members(&self, key: &CellKey) -> Option<&[usize]> {
        self.cells.get(key).map(Vec::as_slice)
    }

    pub fn key_of(&self, p: &Point3) -> CellKey {
        key_of(p, self.cell)
    }
}

fn key_of(p: &Point3, cell: f64) -> CellKey {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Exact nearest-neighbor index over a fixed point set.
#[derive(Debug, Clone)]
pub struct NearestIndex<'a> {
    points: &'a [Point3],
    grid: CellGrid,
    lo: CellKey,
    hi: CellKey,
}

impl<'a> NearestIndex<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        assert!(!points.is_empty(), "nearest-neighbor index over empty set");
        let (min, max) = bounds(points);
        let diag = (max - min).norm();
        let per_axis = (points.len() as f64).cbrt().max(1.0);
        let cell = if diag > 0.0 { diag / per_axis } else { 1.0 };
        let grid = CellGrid::new(points, cell);
        let lo = grid.key_of(&Point3::from(min));
        let hi = grid.key_of(&Point3::from(max));
        Self {
            points,
            grid,
            lo,
            hi,
        }
    }

    /// Index and distance of the point closest to `q`; ties resolve to the
    /// smallest index.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let c = self.grid.key_of(q);
        let h = self.grid.cell;
        let mut best = (usize::MAX, f64::INFINITY);
        // Ring beyond which no occupied cell exists.
        let max_ring = [
            (c.0 - self.lo.0).abs(),
            (c.0 - self.hi.0).abs(),
            (c.1 - self.lo.1).abs(),
            (c.1 - self.hi.1).abs(),
            (c.2 - self.lo.2).abs(),
            (c.2 - self.hi.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let occupied = self.grid.keys.len() as i64;
        let mut k = 0i64;
        loop {
            let shell = if k == 0 {
                1
            } else {
                (2 * k + 1).pow(3) - (2 * k - 1).pow(3)
            };
            if shell > occupied {
                // Exhaustive fallback when the shell would visit more cells
                // than there are occupied ones.
                return self.brute_force(q);
            }
            self.scan_ring(q, c, k, &mut best);
            // Any point in ring k+1 or beyond is at least k*h away.
            if best.1 <= k as f64 * h || k >= max_ring {
                return best;
            }
            k += 1;
        }
    }

    fn scan_ring(&self, q: &Point3, c: CellKey, k: i64, best: &mut (usize, f64)) {
        for dx in -k..=k {
            for dy in -k..=k {
                let edge = dx.abs() == k || dy.abs() == k;
                let mut visit = |dz: i64| {
                    if let Some(ids) = self.grid.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &i in ids {
                            consider(best, i, (self.points[i] - q).norm());
                        }
                    }
                };
                if edge {
                    for dz in -k..=k {
                        visit(dz);
                    }
                } else if k == 0 {
                    visit(0);
                } else {
                    visit(-k);
                    visit(k);
                }
            }
        }
    }

    fn brute_force(&self, q: &Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            consider(&mut best, i, (p - q).norm());
        }
        best
    }
}

#[inline]
fn consider(best: &mut (usize, f64), i: usize, d: f64) {
    if d < best.1 || (d == best.1 && i < best.0) {
        *best = (i, d);
    }
}

pub fn bounds(points: &[Point3]) -> (nalgebra::Vector3<f64>, nalgebra::Vector3<f64>) {
    let mut min = nalgebra::Vector3::repeat(f64::INFINITY);
    let mut max = nalgebra::Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        min = min.inf(&p.coords);
        max = max.sup(&p.coords);
    }
    (min, max)
}
