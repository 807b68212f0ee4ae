mod common;

use std::fs;

use multireg::io::{load_correspondences, load_point_cloud, save_correspondences};
use multireg::scenegen::{generate_scene, scene_truth, ObjectSpec, SceneSpec, Shape};
use multireg::{Error, OUTLIER};

use common::*;

#[test]
fn noise_level_matches_the_request() {
    for sigma in [0.01, 0.05] {
        let corrs = generate_scene(&desk_scene(17, sigma)).unwrap();
        let gt = corrs.gt_labels.as_ref().unwrap();
        let poses = corrs.gt_poses.as_ref().unwrap();
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for (i, c) in corrs.items.iter().enumerate() {
            let d = c.b - poses[&gt.get(i)].apply(&c.a);
            sum_sq += d.norm_squared();
            count += 3;
        }
        let std = (sum_sq / count as f64).sqrt();
        assert!(
            (std / sigma - 1.0).abs() < 0.05,
            "sigma {sigma}: measured {std}"
        );
    }
}

#[test]
fn same_seed_same_scene() {
    let a = generate_scene(&desk_scene(5, 0.02)).unwrap();
    let b = generate_scene(&desk_scene(5, 0.02)).unwrap();
    let c = generate_scene(&desk_scene(6, 0.02)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.items, c.items);
}

#[test]
fn shared_groups_share_one_pose() {
    let spec = shared_motion_scene(2, 0.0);
    let corrs = generate_scene(&spec).unwrap();
    let poses = corrs.gt_poses.as_ref().unwrap();
    assert_eq!(poses[&0], poses[&1]);
    assert_ne!(poses[&0], poses[&2]);
    assert_eq!(scene_truth(&spec, &corrs).poses, *poses);
}

#[test]
fn outlier_count_and_labels() {
    let mut spec = desk_scene(9, 0.0);
    spec.outlier_fraction = 0.15;
    let corrs = generate_scene(&spec).unwrap();
    let gt = corrs.gt_labels.as_ref().unwrap();
    let outliers = gt.as_slice().iter().filter(|&&l| l == OUTLIER).count();
    assert_eq!(outliers, (0.15f64 * 2100.0).floor() as usize);
    assert_eq!(corrs.len(), 2100 + outliers);
    assert_eq!(gt.cluster_count(), 7);
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.csv");
    let corrs = generate_scene(&desk_scene(12, 0.0)).unwrap();
    save_correspondences(&path, &corrs).unwrap();
    let back = load_correspondences(&path).unwrap();
    assert_eq!(back.items, corrs.items);
    assert_eq!(back.gt_labels, corrs.gt_labels);
    let poses = corrs.gt_poses.as_ref().unwrap();
    let gt = back.gt_labels.as_ref().unwrap();
    for (i, c) in back.items.iter().enumerate() {
        assert!(poses[&gt.get(i)].residual(c) < 1e-12);
    }
}

#[test]
fn csv_reader_accepts_variants_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");

    fs::write(&p, "bx,by,bz,ax,ay,az\n1,2,3,4,5,6\n").unwrap();
    let c = load_correspondences(&p).unwrap();
    assert_eq!(c.items[0].a.x, 4.0);
    assert_eq!(c.items[0].b.z, 3.0);

    fs::write(&p, "# comment\n0,0,0,1,1,1,2\n1,0,0,2,1,1,2\n").unwrap();
    let c = load_correspondences(&p).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.gt_labels.unwrap().as_slice(), &[2, 2]);

    for bad in ["0,0,0,1,1\n", "0,0,0,1,1,x\n", "0,0,0,1,1,nan\n"] {
        fs::write(&p, bad).unwrap();
        assert!(
            matches!(load_correspondences(&p), Err(Error::Parse { .. })),
            "{bad:?}"
        );
    }
    assert!(matches!(
        load_correspondences(dir.path().join("nope.csv")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn point_clouds_from_ply_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("cloud.ply");
    fs::write(
        &ply,
        "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float y\nproperty float x\nproperty float z\n\
         element face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3\n4 5 6\n7 8 9\n",
    )
    .unwrap();
    let pts = load_point_cloud(&ply).unwrap();
    assert_eq!(pts.len(), 3);
    assert_eq!((pts[0].x, pts[0].y, pts[0].z), (2.0, 1.0, 3.0));

    fs::write(&ply, "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").unwrap();
    assert!(matches!(load_point_cloud(&ply), Err(Error::Parse { .. })));
    fs::write(&ply, "ply\nformat binary_little_endian 1.0\nend_header\n").unwrap();
    assert!(matches!(load_point_cloud(&ply), Err(Error::Parse { .. })));
    fs::write(&ply, "obj\n").unwrap();
    assert!(matches!(load_point_cloud(&ply), Err(Error::Parse { .. })));

    let csv = dir.path().join("cloud.csv");
    fs::write(&csv, "x,y,z\n0,0,0\n1,0,0\n0,1,0\n0,0,1\n").unwrap();
    assert_eq!(load_point_cloud(&csv).unwrap().len(), 4);

    // A loaded cloud drives the generator like a procedural shape.
    let spec = SceneSpec {
        objects: vec![
            ObjectSpec {
                source: multireg::scenegen::ObjectSource::File { file: csv.clone() },
                points: None,
                diameter: None,
                center: None,
            },
            ObjectSpec::shape(Shape::Box, 20),
        ],
        ..SceneSpec::default()
    };
    let corrs = generate_scene(&spec).unwrap();
    assert_eq!(corrs.len(), 24);
}

#[test]
fn invalid_specs_name_the_field() {
    let mut spec = desk_scene(1, 0.0);
    spec.noise_sigma = -1.0;
    assert!(matches!(
        spec.validate(),
        Err(Error::InvalidParam {
            field: "noise_sigma",
            ..
        })
    ));
    let mut spec = desk_scene(1, 0.0);
    spec.shared_motion_groups = vec![vec![0, 9]];
    assert!(matches!(
        spec.validate(),
        Err(Error::InvalidParam {
            field: "shared_motion_groups",
            ..
        })
    ));
    assert!(SceneSpec::default().validate().is_err());
}
