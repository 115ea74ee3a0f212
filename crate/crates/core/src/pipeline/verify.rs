//! Randomized invariant checks over the whole stack, for the `verify` verb.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{evaluate_transfer, match_operation, prepare_shape, PipelineConfig, PipelineError};
use crate::fmap::FmapParams;
use crate::imitation::{align_supports, blend_to_path, filter_grasps, imitate_path, path_deltas, BlendParams, GraspCandidate, IcpParams, Trajectory};
use crate::interaction::{compute_eif, compute_rif, ContactSet, PlaneModel};
use crate::screw::{UnitDualQuaternion, UnitQuaternion};
use crate::shapes;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
}

fn check(name: &'static str, worst: f64, limit: f64) -> Check {
    Check { name, passed: worst <= limit, worst, limit }
}

pub fn random_pose(rng: &mut impl Rng) -> UnitDualQuaternion {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-6 { Vector3::z() } else { axis };
    let q = UnitQuaternion::from_axis_angle(&axis, rng.random_range(-PI..PI));
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    UnitDualQuaternion::from_pose(&t, &q)
}

fn random_path(rng: &mut impl Rng, len: usize) -> Trajectory {
    let mut x = random_pose(rng);
    let mut poses = vec![x];
    for _ in 1..len {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
        let step = UnitDualQuaternion::from_pose(
            &Vector3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)),
            &UnitQuaternion::from_axis_angle(&axis, rng.random_range(-0.2..0.2)),
        );
        x = x * step;
        poses.push(x);
    }
    Trajectory::new(poses).expect("len ≥ 2")
}

/// Runs every check with `cases` random instances each.
pub fn run_invariants(seed: u64, cases: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let (mut ends, mut half, mut drift) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        ends = ends.max(UnitDualQuaternion::sclerp(&a, &b, 0.0).distance(&a)).max(UnitDualQuaternion::sclerp(&a, &b, 1.0).distance(&b));
        let h = a.pow(0.5);
        half = half.max((h * h).distance(&a));
    }
    let mut x = UnitDualQuaternion::IDENTITY;
    for _ in 0..1000 {
        x = x * random_pose(&mut rng);
        drift = drift.max(x.unit_drift());
    }
    out.push(check("sclerp endpoints", ends, 1e-12));
    out.push(check("half power squared", half, 1e-10));
    out.push(check("unit drift over 1000 products", drift, 1e-9));

    let (mut round, mut deltas) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let len = rng.random_range(2..40);
        let path = random_path(&mut rng, len);
        let d = path_deltas(&path);
        let back = imitate_path(&d, path.last()).expect("non-empty deltas");
        for (p, q) in back.poses().iter().zip(path.poses()) {
            round = round.max(p.distance(q));
        }
        let moved = imitate_path(&d, &random_pose(&mut rng)).expect("non-empty deltas");
        for (p, q) in path_deltas(&moved).iter().zip(&d) {
            deltas = deltas.max(p.distance(q));
        }
    }
    out.push(check("delta/imitate round trip", round, 1e-10));
    out.push(check("imitated deltas preserved", deltas, 1e-10));

    let mut blend = 0.0f64;
    for _ in 0..cases.min(20) {
        let path = random_path(&mut rng, 10);
        let start = *path.first() * UnitDualQuaternion::from_translation(&Vector3::new(0.1, 0.0, 0.0));
        let r = blend_to_path(&start, &path, &BlendParams::default()).expect("blend converges");
        blend = blend.max(r.last().expect("non-empty").distance(path.last()));
        blend = blend.max(r.iter().map(|p| p.unit_drift()).fold(0.0, f64::max));
    }
    out.push(check("blend ends at goal with unit poses", blend, 1e-9));

    let sheet = shapes::sheet([(0.0, 0.0), (0.1, 0.0), (0.1, 0.1), (0.0, 0.1)], 20, 20);
    let c = Point3::new(0.05, 0.05, 0.0);
    let rif = compute_rif(&sheet, &ContactSet::new().with_finger("f", vec![c]), 0.02).expect("valid contacts");
    let rif_err = sheet.vertices().iter().zip(&rif.values).map(|(p, v)| (v - (1.0 - (p - c).norm() / 0.02).max(0.0)).abs()).fold(0.0, f64::max);
    out.push(check("rif analytic profile", rif_err, 1e-12));

    let cube = shapes::cuboid(1.0, 1.0, 1.0, 4);
    let eif = compute_eif(&cube, &PlaneModel::horizontal(0.0), 0.005).expect("positive threshold");
    let wrong = cube.vertices().iter().zip(&eif.values).filter(|(p, v)| (p.z == 0.0) != (**v == 1.0)).count();
    out.push(check("eif marks the bottom face", wrong as f64, 0.0));

    let mut align = 0.0f64;
    for _ in 0..cases.min(20) {
        let pts: Vec<Point3<f64>> = (0..100).map(|_| Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))).collect();
        let x = random_pose(&mut rng);
        let moved: Vec<_> = pts.iter().map(|p| x.transform_point(p)).collect();
        let ids: Vec<usize> = (0..pts.len()).collect();
        let al = align_supports(&pts, &moved, &ids, &IcpParams::default()).expect("non-degenerate");
        align = align.max(al.transform.rotation().angle_to(&x.rotation())).max((al.transform.translation() - x.translation()).norm());
    }
    out.push(check("support alignment recovery", align, 1e-6));

    let mut order = 0.0f64;
    for _ in 0..cases.min(20) {
        let mut g: Vec<GraspCandidate> = (0..30)
            .map(|_| {
                let a = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -1.0).normalize();
                GraspCandidate { pose: random_pose(&mut rng), score: (rng.random_range(0..5) as f64) / 4.0, approach: [a.x, a.y, a.z] }
            })
            .collect();
        let down = -Vector3::z();
        let a = filter_grasps(&g, &down, PI / 6.0, |_| true).ok();
        g.reverse();
        let b = filter_grasps(&g, &down, PI / 6.0, |_| true).ok();
        if a != b {
            order += 1.0;
        }
    }
    out.push(check("grasp choice ignores order", order, 0.0));

    out.push(self_map_check(seed));

    let values: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
    let (mae, std) = evaluate_transfer(&values, &values).expect("equal lengths");
    out.push(check("self evaluation is exact", mae + std, 0.0));
    out
}

fn self_map_check(seed: u64) -> Check {
    let mesh = shapes::bottle(&shapes::BottleParams::default(), 24, 18);
    let config = PipelineConfig { seed, fmap: FmapParams { k_init: 20, k_final: 40, ..FmapParams::default() }, ..PipelineConfig::default() };
    let run = || -> Result<f64, PipelineError> {
        let (shape, _, _) = prepare_shape(&mesh, &config)?;
        let m = match_operation(&shape, std::slice::from_ref(&shape), &config, &mut Vec::new())?;
        Ok(1.0 - m.p2p.identity_fraction())
    };
    check("self map is the identity", run().unwrap_or(f64::INFINITY), 0.01)
}
