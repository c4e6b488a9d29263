use std::fs;

use gravhom::io::{read_correspondences, read_table, sidecar_path, write_correspondences, write_table, RANSAC_CURVE};
use gravhom::{generate, Error, SceneConfig};

#[test]
fn correspondences_round_trip() {
    let inst = generate(&SceneConfig { n_points: 25, seed: 3, ..SceneConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.csv");
    write_correspondences(&path, &inst.correspondences, &inst.frame).unwrap();
    assert!(sidecar_path(&path).exists());
    let (back, frame) = read_correspondences(&path, None).unwrap();
    assert_eq!(frame, inst.frame);
    assert_eq!(back.len(), 25);
    for (a, b) in back.iter().zip(&inst.correspondences) {
        assert!((a.p1.to_vec() - b.p1.to_vec()).norm() < 1e-14);
        assert!((a.p2.to_vec() - b.p2.to_vec()).norm() < 1e-14);
        assert!((a.r2.matrix() - b.r2.matrix()).norm() < 1e-14);
    }
}

#[test]
fn empty_table_keeps_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    write_table::<(f64, f64)>(&path, &RANSAC_CURVE, &[]).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().trim(), "time_ms,mean_inliers");
    let rows: Vec<(f64, f64)> = read_table(&path, &RANSAC_CURVE).unwrap();
    assert!(rows.is_empty());
}

fn write_points(body: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    fs::write(&path, format!("x1,y1,x2,y2,qw1,qx1,qy1,qz1,qw2,qx2,qy2,qz2\n{body}")).unwrap();
    fs::write(sidecar_path(&path), r#"{"schema_version": 1, "width": 640, "height": 480}"#).unwrap();
    dir
}

#[test]
fn malformed_row_is_named() {
    let dir = write_points("1,2,3,4,1,0,0,0,1,0,0,0\n1,2,oops,4,1,0,0,0,1,0,0,0\n");
    match read_correspondences(&dir.path().join("p.csv"), None) {
        Err(Error::Parse { message, .. }) => assert!(message.contains("line 3") || message.contains("record 2"), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_unit_quaternion_is_rejected() {
    let dir = write_points("1,2,3,4,1,0,0,0,2,0,0,0\n");
    match read_correspondences(&dir.path().join("p.csv"), None) {
        Err(Error::InvalidRotation(m)) => assert!(m.contains("line 2"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(read_table::<(f64, f64)>(&path, &RANSAC_CURVE), Err(Error::Parse { row: 1, .. })));
}
