//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skill_transfer::fmap::{select_match, FunctionKind};
use skill_transfer::imitation::{align_supports, imitate_path, path_deltas, IcpParams, Trajectory};
use skill_transfer::interaction::{compute_eif, compute_rif, ContactSet, NormalOrientation, PlaneModel};
use skill_transfer::pipeline::{
    evaluate, imitate, load_scene, match_operation, prepare_shape, random_pose, read_function_csv, record_bundle, synthetic, PipelineConfig,
    RecordManifest,
};
use skill_transfer::screw::{UnitDualQuaternion, UnitQuaternion};
use skill_transfer::shapes;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn read_csv(path: &std::path::Path) -> Vec<f64> {
    read_function_csv(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

struct Data {
    _dir: tempfile::TempDir,
    dataset: synthetic::Dataset,
    bundle: skill_transfer::pipeline::DemonstrationBundle,
    scene: skill_transfer::pipeline::NewScene,
}

fn data() -> Data {
    let dir = tempfile::tempdir().unwrap();
    let dataset = synthetic::write_dataset(dir.path()).unwrap();
    let (manifest, base) = RecordManifest::load(&dataset.manifest).unwrap();
    let bundle = record_bundle(&manifest, &base).unwrap();
    let scene = load_scene(&dataset.scene).unwrap();
    Data { _dir: dir, dataset, bundle, scene }
}

// identity on ≥ 99% of vertices, off-diagonal mass < 1% of diagonal, < 30 s per mesh
fn self_map(d: &Data) -> Outcome {
    let config = PipelineConfig::default();
    let (mut worst_id, mut worst_off, mut worst_t) = (1.0f64, 0.0f64, 0.0f64);
    let mut names = Vec::new();
    for mesh in d.bundle.scene.objects.iter().chain(&d.scene.scene.objects) {
        let t = Instant::now();
        let (shape, _, _) = prepare_shape(mesh, &config).unwrap();
        let m = match_operation(&shape, std::slice::from_ref(&shape), &config, &mut Vec::new()).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let (off, diag) = m.map.diagonal_mass();
        worst_id = worst_id.min(m.p2p.identity_fraction());
        worst_off = worst_off.max(off / diag);
        worst_t = worst_t.max(secs);
        names.push(mesh.id().to_string());
    }
    outcome(
        worst_id >= 0.99 && worst_off < 0.01 && worst_t < 30.0,
        format!(
            "{} meshes ({}), min identity {:.4} (≥ 0.99), max off/diag {:.1e} (< 1e-2), max time {:.1} s (< 30 s)",
            names.len(),
            names.join(", "),
            worst_id,
            worst_off,
            worst_t
        ),
    )
}

// total MAE ≤ 0.2 on the bottle pair
fn transfer_error(d: &Data) -> Outcome {
    let truth = [(FunctionKind::Rif, read_csv(&d.dataset.rif_truth)), (FunctionKind::Eif, read_csv(&d.dataset.eif_truth))];
    let (report, _) = evaluate(&d.bundle, &d.scene, 0, &truth, &d.bundle.config).unwrap();
    let per: Vec<String> = report.functions.iter().map(|f| format!("{:?} {:.4}±{:.4}", f.kind, f.mae, f.std)).collect();
    outcome(report.total_mae <= 0.2, format!("total MAE {:.4} (≤ 0.2); {}", report.total_mae, per.join(", ")))
}

// 10/10 seeded clutter scenes and the two-bottle scene
fn selection() -> Outcome {
    let config = PipelineConfig::default();
    let demo = synthetic::bottle_mesh(&synthetic::demo_bottle_params(), "bottle");
    let (sel, _, _) = prepare_shape(&demo, &config).unwrap();
    let mut correct = 0;
    for seed in 0..10 {
        let s = synthetic::selection_scene(seed);
        let shapes: Vec<_> = s.objects.iter().map(|m| prepare_shape(m, &config).unwrap().0).collect();
        let cands: Vec<_> = shapes.iter().map(|p| p.candidate()).collect();
        let r = select_match(&sel.candidate(), &cands, &config.fmap).unwrap();
        correct += (r.index == s.target) as usize;
    }
    let two = synthetic::two_bottle_scene();
    let shapes: Vec<_> = two.iter().map(|m| prepare_shape(m, &config).unwrap().0).collect();
    let cands: Vec<_> = shapes.iter().map(|p| p.candidate()).collect();
    let r = select_match(&sel.candidate(), &cands, &config.fmap).unwrap();
    outcome(
        correct == 10 && r.index == 0,
        format!(
            "clutter scenes {correct}/10 (10/10); two bottles: picked {} (scores {:.1} vs {:.1})",
            two[r.index].id(),
            r.scores[0].score,
            r.scores[1].score
        ),
    )
}

fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let len = rng.random_range(2..60);
    let mut x = random_pose(rng);
    let mut poses = vec![x];
    for _ in 1..len {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
        let step = UnitDualQuaternion::from_pose(
            &Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
            &UnitQuaternion::from_axis_angle(&axis, rng.random_range(-0.5..0.5)),
        );
        x = x * step;
        poses.push(x);
    }
    Trajectory::new(poses).unwrap()
}

// 100 trajectories × 100 goals: round trip < 1e-10, deltas preserved < 1e-10
fn tsia() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut round, mut delta) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let path = random_trajectory(&mut rng);
        let d = path_deltas(&path);
        let back = imitate_path(&d, path.last()).unwrap();
        for (a, b) in back.poses().iter().zip(path.poses()) {
            round = round.max(a.distance(b));
        }
        for _ in 0..100 {
            let goal = random_pose(&mut rng);
            let new = imitate_path(&d, &goal).unwrap();
            for (a, b) in path_deltas(&new).iter().zip(&d) {
                delta = delta.max(a.distance(b));
            }
        }
    }
    outcome(round < 1e-10 && delta < 1e-10, format!("round trip {round:.1e} (< 1e-10), delta deviation {delta:.1e} (< 1e-10)"))
}

// endpoints 1e-12, half powers 1e-10 over 1000 samples, drift < 1e-9 over 1000 products
fn screw_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut ends, mut half) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        ends = ends.max(UnitDualQuaternion::sclerp(&a, &b, 0.0).distance(&a));
        ends = ends.max(UnitDualQuaternion::sclerp(&a, &b, 1.0).distance(&b));
        let h = a.pow(0.5);
        half = half.max((h * h).distance(&a));
    }
    let mut x = UnitDualQuaternion::IDENTITY;
    let mut drift = 0.0f64;
    for _ in 0..1000 {
        x = x * random_pose(&mut rng);
        drift = drift.max(x.unit_drift());
    }
    outcome(
        ends <= 1e-12 && half <= 1e-10 && drift < 1e-9,
        format!("endpoints {ends:.1e} (≤ 1e-12), half-power {half:.1e} (≤ 1e-10), drift {drift:.1e} (< 1e-9)"),
    )
}

// RIF 1 / 0.5 / 0 to 1e-12; EIF marks exactly the cube's bottom face
fn interaction() -> Outcome {
    let lambda_d = 0.02;
    let sheet = shapes::sheet([(0.0, 0.0), (0.1, 0.0), (0.1, 0.1), (0.0, 0.1)], 20, 20);
    let q = sheet.nearest_vertex(&Point3::new(0.05, 0.05, 0.0));
    let qp = sheet.vertices()[q];
    let rif = compute_rif(&sheet, &ContactSet::new().with_finger("f", vec![qp]), lambda_d).unwrap();
    let mut err = (rif.values[q] - 1.0).abs();
    let half = sheet.nearest_vertex(&(qp + Vector3::new(lambda_d / 2.0, 0.0, 0.0)));
    err = err.max((rif.values[half] - 0.5).abs());
    for (p, v) in sheet.vertices().iter().zip(&rif.values) {
        if (p - qp).norm() >= lambda_d {
            err = err.max(v.abs());
        }
    }

    let mut wrong = 0;
    let mut cases = 0;
    for (segments, lambda_p) in [(1, 0.001), (1, 0.005), (1, 0.49), (4, 0.005), (4, 0.2), (8, 0.1)] {
        let cube = shapes::cuboid(1.0, 1.0, 1.0, segments);
        // a tilted, shifted table: place the cube on it with the same motion
        let x = UnitDualQuaternion::from_pose(&Vector3::new(0.3, -0.2, 0.7), &UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.4));
        for (mesh, plane) in [
            (cube.clone(), PlaneModel::horizontal(0.0)),
            (
                cube.map_vertices(|p| x.transform_point(p)),
                PlaneModel::new(x.transform_point(&Point3::origin()), x.transform_vector(&Vector3::z()), NormalOrientation::IntoFreeSpace).unwrap(),
            ),
        ] {
            let eif = compute_eif(&mesh, &plane, lambda_p).unwrap();
            for (p, v) in cube.vertices().iter().zip(&eif.values) {
                if (p.z == 0.0) != (*v == 1.0) {
                    wrong += 1;
                }
            }
            cases += 1;
        }
    }
    outcome(err <= 1e-12 && wrong == 0, format!("RIF max error {err:.1e} (≤ 1e-12); EIF {wrong} misclassified vertices over {cases} cube/plane cases (0)"))
}

// recovery ≤ 1e-6 rad / m; ICP RMS never increases
fn alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut rot, mut trans) = (0.0f64, 0.0f64);
    let mut increases = 0;
    let bottle = synthetic::bottle_mesh(&synthetic::demo_bottle_params(), "bottle");
    for trial in 0..100 {
        let pts: Vec<Point3<f64>> = (0..200).map(|_| bottle.vertices()[rng.random_range(0..bottle.vertex_count())]).collect();
        let x = random_pose(&mut rng);
        let moved: Vec<_> = pts.iter().map(|p| x.transform_point(p)).collect();
        let mut ids: Vec<usize> = (0..pts.len()).collect();
        if trial % 2 == 1 {
            // corrupt a fifth of the correspondences; ICP must not get worse
            for i in (0..ids.len()).step_by(5) {
                ids[i] = rng.random_range(0..pts.len());
            }
        }
        let a = align_supports(&pts, &moved, &ids, &IcpParams::default()).unwrap();
        if trial % 2 == 0 {
            rot = rot.max(a.transform.rotation().angle_to(&x.rotation()));
            trans = trans.max((a.transform.translation() - x.translation()).norm());
        }
        increases += a.rms_history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    outcome(
        rot <= 1e-6 && trans <= 1e-6 && increases == 0,
        format!("rotation error {rot:.1e} rad, translation error {trans:.1e} m (≤ 1e-6); RMS increases {increases} (0)"),
    )
}

// byte-identical trajectory JSON across runs
fn determinism(d: &Data) -> Outcome {
    let run = || {
        let out = imitate(&d.bundle, &d.scene, &d.bundle.config).unwrap();
        serde_json::to_vec_pretty(&out.trajectory).unwrap()
    };
    let (a, b) = (run(), run());
    outcome(a == b && !a.is_empty(), format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let data = data();
    let checks: [(&str, Box<dyn Fn() -> Outcome>); 8] = [
        ("self-map identity", Box::new(|| self_map(&data))),
        ("function transfer error", Box::new(|| transfer_error(&data))),
        ("multi-object selection", Box::new(selection)),
        ("trajectory imitation exactness", Box::new(tsia)),
        ("screw algebra", Box::new(screw_algebra)),
        ("interaction functions", Box::new(interaction)),
        ("support alignment", Box::new(alignment)),
        ("end-to-end determinism", Box::new(|| determinism(&data))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        failed += (!o.passed) as usize;
        println!("criterion {}: {} {name}: {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
