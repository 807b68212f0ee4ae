mod common;

use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use multireg::init::{euclidean_clusters, load_labels, radius_labels};
use multireg::{Error, Labeling, Point3};

use common::*;

/// True when the two labelings induce the same partition.
fn same_partition(a: &Labeling, b: &Labeling) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(x, y)| *fwd.entry(*x).or_insert(*y) == *y && *back.entry(*y).or_insert(*x) == *x)
}

fn blobs(seed: u64, k: usize, per: usize) -> Vec<Point3> {
    let mut r = rng(seed);
    let mut pts = Vec::new();
    for c in 0..k {
        let center = Point3::new(c as f64 * 3.0, (c % 2) as f64, 0.0);
        for _ in 0..per {
            pts.push(center + random_point(&mut r, 0.4).coords);
        }
    }
    pts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clustering_ignores_point_order(seed in 0u64..10_000, target in 1usize..12) {
        let mut r = rng(seed);
        let pts: Vec<Point3> = (0..150).map(|_| random_point(&mut r, 4.0)).collect();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.shuffle(&mut r);
        let shuffled: Vec<Point3> = order.iter().map(|&i| pts[i]).collect();

        let base = euclidean_clusters(&pts, target).unwrap();
        let other = euclidean_clusters(&shuffled, target).unwrap();
        prop_assert_eq!(base.cluster_count, other.cluster_count);
        prop_assert_eq!(base.radius, other.radius);
        let unshuffled = {
            let mut v = vec![0; pts.len()];
            for (k, &i) in order.iter().enumerate() {
                v[i] = other.labeling.get(k);
            }
            Labeling::new(v)
        };
        prop_assert!(same_partition(&base.labeling, &unshuffled));
    }

    #[test]
    fn radius_labels_match_pairwise_connectivity(seed in 0u64..10_000, radius in 0.1f64..1.5) {
        let mut r = rng(seed);
        let pts: Vec<Point3> = (0..60).map(|_| random_point(&mut r, 2.0)).collect();
        let labels = radius_labels(&pts, radius);
        // Flood fill over the full distance matrix.
        let mut comp = vec![usize::MAX; pts.len()];
        for s in 0..pts.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = s;
            let mut stack = vec![s];
            while let Some(i) = stack.pop() {
                for j in 0..pts.len() {
                    if comp[j] == usize::MAX && (pts[i] - pts[j]).norm() <= radius {
                        comp[j] = s;
                        stack.push(j);
                    }
                }
            }
        }
        let oracle = Labeling::new(comp.iter().map(|&c| c as i32).collect());
        prop_assert!(same_partition(&labels, &oracle));
    }
}

#[test]
fn separated_blobs_are_found() {
    let pts = blobs(2, 5, 40);
    let c = euclidean_clusters(&pts, 5).unwrap();
    assert_eq!(c.cluster_count, 5);
    assert!(!c.target_unreachable);
    let truth = Labeling::new((0..200).map(|i| i / 40).collect());
    assert!(same_partition(&c.labeling, &truth));
    // first-occurrence numbering
    assert_eq!(c.labeling.get(0), 0);
}

#[test]
fn bad_targets_are_rejected() {
    let pts = blobs(1, 2, 5);
    assert!(matches!(
        euclidean_clusters(&pts, 0),
        Err(Error::InvalidParam { .. })
    ));
    assert!(matches!(
        euclidean_clusters(&pts, 11),
        Err(Error::InvalidParam { .. })
    ));
    assert!(matches!(euclidean_clusters(&[], 1), Err(Error::EmptySet)));
    let same = vec![Point3::origin(); 4];
    let c = euclidean_clusters(&same, 3).unwrap();
    assert_eq!(c.cluster_count, 1);
    assert!(c.target_unreachable);
}

#[test]
fn labels_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("labels.csv");
    fs::write(&p, "index,label\n2,1\n0,0\n1,-1\n").unwrap();
    assert_eq!(load_labels(&p).unwrap().as_slice(), &[0, -1, 1]);

    fs::write(&p, "0,0\n1,1\n").unwrap();
    assert_eq!(load_labels(&p).unwrap().as_slice(), &[0, 1]);

    for bad in ["0,0\n0,1\n", "0,0\n2,1\n", "0,x\n", "0,-2\n", "0,0,0\n"] {
        fs::write(&p, bad).unwrap();
        assert!(
            matches!(
                load_labels(&p),
                Err(Error::Parse { .. } | Error::Coverage { .. })
            ),
            "{bad:?}"
        );
    }
    assert!(load_labels(dir.path().join("missing.csv")).is_err());
}
