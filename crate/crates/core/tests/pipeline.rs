use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use skill_transfer::fmap::FunctionKind;
use skill_transfer::imitation::ImitationError;
use skill_transfer::pipeline::{
    evaluate_transfer, imitate, load_bundle, load_scene, load_trajectory, persist_bundle, read_function_csv, record_bundle, synthetic,
    write_function_csv, NewScene, PipelineConfig, PipelineError, RecordManifest, BUNDLE_FILE,
};
use skill_transfer::screw::UnitDualQuaternion;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// Distance from `p` to the polyline through `poses` (translations only).
fn polyline_distance(p: &Vector3<f64>, poses: &[UnitDualQuaternion]) -> f64 {
    poses
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].translation(), w[1].translation());
            let ab = b - a;
            let s = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            (p - (a + ab * s)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn bundle_round_trip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synthetic::write_dataset(&tmp.path().join("data")).unwrap();
    let (manifest, base) = RecordManifest::load(&ds.manifest).unwrap();
    let bundle = record_bundle(&manifest, &base).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    persist_bundle(&bundle, &a).unwrap();
    let loaded = load_bundle(&a).unwrap();
    persist_bundle(&loaded, &b).unwrap();
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.iter().map(|f| &f.0).collect::<Vec<_>>(), sb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in sa.iter().zip(&sb) {
        assert!(x == y, "{name} differs after a reload");
    }
    assert!(a.join(BUNDLE_FILE).exists());

    let op = &loaded.operations[0];
    assert_eq!(op.object, "bottle");
    assert!(op.is_grasp());
    assert_eq!(op.eifs().count(), 1);
    assert_eq!(loaded.config.seed, 7);
    // the bottle is carried by the place offset
    assert!((op.displacement.to_pose().unwrap().translation() - Vector3::from(synthetic::PLACE_OFFSET)).norm() < 1e-12);
    let rif = op.function(FunctionKind::Rif).unwrap();
    assert_eq!(rif.values.iter().cloned().fold(0.0, f64::max), 1.0);
}

#[test]
fn imitating_in_the_demonstration_scene_replays_it() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synthetic::write_dataset(tmp.path()).unwrap();
    let (manifest, base) = RecordManifest::load(&ds.manifest).unwrap();
    let bundle = record_bundle(&manifest, &base).unwrap();
    let op = &bundle.operations[0];
    let start = *op.segments[0].first();
    let scene = NewScene { scene: bundle.scene.clone(), start: Some(start), grasps: None };
    let out = imitate(&bundle, &scene, &bundle.config).unwrap();
    let report = &out.report.operations[0];
    assert_eq!(report.selected, "bottle");
    // grasp and final pose reproduce the demonstration
    let grasp = report.grasp.to_pose().unwrap();
    assert!(grasp.distance(op.segments[0].last()) < 1e-9, "{:?}", grasp);
    assert!(report.final_pose.to_pose().unwrap().distance(op.segments[1].last()) < 1e-6);
    let demo: Vec<UnitDualQuaternion> = op.segments.iter().flat_map(|s| s.poses().to_vec()).collect();
    let worst = out.trajectory.waypoints.iter().map(|w| polyline_distance(&w.translation(), &demo)).fold(0.0, f64::max);
    assert!(worst < 0.005, "worst deviation from the demonstrated path {worst}");
    assert_eq!(out.report.seed, 7);
}

#[test]
fn csv_and_evaluation() {
    let values = vec![0.0, 0.25, 1.0, 1.0 / 3.0];
    let mut buf = Vec::new();
    write_function_csv(&values, &mut buf).unwrap();
    assert_eq!(read_function_csv(buf.as_slice()).unwrap(), values);
    // shuffled rows read back in vertex order
    assert_eq!(read_function_csv("vertex,value\n1,2\n0,1\n".as_bytes()).unwrap(), vec![1.0, 2.0]);
    assert_eq!(evaluate_transfer(&values, &values).unwrap(), (0.0, 0.0));
    let (mae, std) = evaluate_transfer(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap();
    assert!((mae - 0.25).abs() < 1e-15);
    assert!((std - (0.1875f64).sqrt()).abs() < 1e-15);
}

#[test]
fn config_round_trip_and_defaults() {
    let c = PipelineConfig::default();
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), c);
    let partial: PipelineConfig = serde_json::from_str(r#"{"delta": 0.4, "fmap": {"k_init": 50}}"#).unwrap();
    assert_eq!(partial.delta, 0.4);
    assert_eq!(partial.fmap.k_init, 50);
    assert_eq!(partial.fmap.k_final, 200);
    assert!(PipelineConfig { delta: 1.5, ..c }.validate().is_err());
    assert!((c.theta - std::f64::consts::PI / 6.0).abs() < 1e-15);
}

#[test]
fn input_errors_map_to_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let e = load_bundle(tmp.path()).unwrap_err();
    assert!(matches!(e, PipelineError::Input { .. }));
    assert_eq!(e.exit_code(), 2);
    let empty = tmp.path().join("t.json");
    fs::write(&empty, r#"{"waypoints": [{"t": [0, 0, 0], "q": [1, 0, 0, 0]}]}"#).unwrap();
    let e = load_trajectory(&empty).unwrap_err();
    assert!(matches!(e, PipelineError::Imitation { source: ImitationError::TooShort { .. }, .. }), "{e}");
    fs::write(tmp.path().join("scene.json"), "{").unwrap();
    assert_eq!(load_scene(tmp.path()).unwrap_err().exit_code(), 2);
}
