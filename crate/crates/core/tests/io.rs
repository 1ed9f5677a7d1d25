use semiflex::generate::{generate, Kind, Params};
use semiflex::io::{frame_file_name, obj_from_curves, obj_string};
use semiflex::*;

#[test]
fn three_node_two_ribbon_mesh() {
    let curves: Vec<Vec<Vec3>> =
        (0..3).map(|i| (0..3).map(|j| Vec3::new(j as f64, i as f64, 0.5 * (i * j) as f64)).collect()).collect();
    let mesh = parse_obj(&obj_from_curves(&curves).unwrap()).unwrap();
    assert_eq!(mesh.vertices.len(), 9);
    assert_eq!(mesh.faces.len(), 4);
    assert!(mesh.faces.iter().all(|f| f.len() == 4));
    // (i, j), (i, j+1), (i+1, j+1), (i+1, j) for i = 1, j = 1.
    assert_eq!(mesh.faces[3], vec![4, 5, 8, 7]);
}

#[test]
fn exported_frames_parse_back() {
    let s = generate(Kind::Rev, &Params::default().with_ribbons(3).with_nodes(21)).unwrap();
    let t = flex_2ribbon(&s.sub_surface(0, 2).unwrap(), 0.1, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = export_frames(&t.surfaces, dir.path()).unwrap();
    assert_eq!(paths.len(), 4);
    for (k, (path, frame)) in paths.iter().zip(&t.surfaces).enumerate() {
        assert_eq!(path.file_name().unwrap().to_str().unwrap(), frame_file_name(k));
        let mesh = parse_obj(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(mesh.vertices.len(), 3 * 21);
        assert_eq!(mesh.faces.len(), 2 * 20);
        let expected: Vec<[f64; 3]> = frame.curves().iter().flatten().map(|p| [p.x, p.y, p.z]).collect();
        assert_eq!(mesh.vertices, expected);
    }
    assert_eq!(frame_file_name(12), "frame_0012.obj");
}

#[test]
fn export_rejects_empty_and_unwritable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(export_frames(&[], dir.path()).is_err());
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let s = generate(Kind::Cone, &Params::default().with_nodes(11)).unwrap();
    assert!(matches!(export_frames(&[s], &file.join("sub")), Err(FlexError::Io(_))));
}

#[test]
fn documents_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [Kind::Rev, Kind::Cone, Kind::Rand, Kind::Dev, Kind::Translate] {
        let s = generate(kind, &Params::default().with_ribbons(3).with_seed(11)).unwrap();
        let meta = Metadata { name: kind.to_string(), generator: Some(kind.to_string()), seed: Some(11) };
        let path = dir.path().join(format!("{kind}.json"));
        SurfaceDocument::new(&s, meta.clone()).save(&path).unwrap();
        let doc = SurfaceDocument::load(&path).unwrap();
        assert_eq!(doc.metadata, meta);
        let back = doc.to_surface().unwrap();
        for (a, b) in s.curves().iter().flatten().zip(back.curves().iter().flatten()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }
}

#[test]
fn trajectory_document_round_trip() {
    let s = generate(Kind::Dev, &Params::default().with_nodes(41)).unwrap();
    let t = flex_2ribbon(&s, 0.2, 5).unwrap();
    let doc = TrajectoryDocument::new(&t).unwrap();
    let back = TrajectoryDocument::from_json(&doc.to_json().unwrap()).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.surfaces().unwrap(), t.surfaces);
}

#[test]
fn report_document_carries_version_and_tolerances() {
    let tol = Tolerances { tol_chi: 1e-6, tol_flex: 1e-5 };
    let doc = ReportDocument::new("check", tol, serde_json::json!({"verdict": "flexible"}));
    let v: serde_json::Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
    assert_eq!(v["format"], 1);
    assert_eq!(v["tool"], "semiflex");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["tolerances"]["tol_chi"], 1e-6);
    assert_eq!(v["report"]["verdict"], "flexible");
}

#[test]
fn obj_string_matches_raw_writer() {
    let s = generate(Kind::Rev, &Params::default().with_nodes(9)).unwrap();
    assert_eq!(obj_string(&s), obj_from_curves(s.curves()).unwrap());
    assert!(obj_from_curves(&s.curves()[..1]).is_err());
}
