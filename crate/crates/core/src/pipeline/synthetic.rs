//! A small synthetic grasp-and-place dataset: a demonstration scene with a
//! bottle on a table, a new scene with a differently shaped bottle among
//! distractors, and per-vertex ground truth obtained from the shared
//! parameterization of the two bottles.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{write_function_csv, PipelineError};
use crate::fmap::SurfaceFunction;
use crate::imitation::Trajectory;
use crate::interaction::{compute_eif, compute_rif, ContactSet, PlaneModel};
use crate::mesh::{write_off, TriangleMesh};
use crate::screw::{UnitDualQuaternion, UnitQuaternion};
use crate::shapes::{self, BottleParams};

/// Ring and profile resolution shared by both bottles.
pub const N_THETA: usize = 48;
pub const N_PROFILE: usize = 36;
/// Depth of the demonstrated neck grasp below the bottle top (m).
pub const GRASP_DEPTH: f64 = 0.015;
/// Where the demonstrated bottle is put down, relative to where it stood.
pub const PLACE_OFFSET: [f64; 3] = [0.0, 0.15, 0.0];

pub fn demo_bottle_params() -> BottleParams {
    BottleParams::default()
}

pub fn target_bottle_params() -> BottleParams {
    BottleParams {
        body_radius: 0.038,
        body_height: 0.13,
        shoulder_height: 0.035,
        neck_radius: 0.012,
        ellipticity: 0.1,
        ..BottleParams::default()
    }
}

pub fn bottle_mesh(params: &BottleParams, id: &str) -> TriangleMesh {
    shapes::bottle(params, N_THETA, N_PROFILE).with_id(id)
}

/// Storage crate of the demonstration scene, standing at the origin.
pub fn crate_mesh() -> TriangleMesh {
    let m = shapes::cuboid(0.08, 0.06, 0.1, 16);
    shapes::with_bumps(&m, &[(Point3::new(0.08, 0.02, 0.07), 0.015, 0.006), (Point3::new(0.03, 0.0, 0.03), 0.012, 0.004)]).with_id("crate")
}

/// Torus lying on the table, centered on the z axis.
pub fn ring_mesh() -> TriangleMesh {
    let on_surface = |u: f64, v: f64| {
        let r = 0.05 + 0.018 * v.cos();
        Point3::new(r * u.cos(), r * u.sin(), 0.018 * v.sin())
    };
    let m = shapes::torus(0.05, 0.018, 48, 24);
    shapes::with_bumps(&m, &[(on_surface(0.3, 0.8), 0.012, 0.005), (on_surface(2.2, -1.5), 0.01, 0.004)]).with_id("ring")
}

/// Block standing at the origin.
pub fn block_mesh() -> TriangleMesh {
    let m = shapes::cuboid(0.07, 0.07, 0.09, 16);
    shapes::with_bumps(&m, &[(Point3::new(0.07, 0.05, 0.06), 0.014, 0.005), (Point3::new(0.05, 0.02, 0.09), 0.012, 0.004)]).with_id("block")
}

/// Tool frame with its z-axis (the approach direction) pointing down.
pub fn gripper_rotation() -> UnitQuaternion {
    UnitQuaternion::from_axis_angle(&Vector3::x(), PI)
}

fn pose(t: Vector3<f64>) -> UnitDualQuaternion {
    UnitDualQuaternion::from_pose(&t, &gripper_rotation())
}

/// Grasp point on the axis of a bottle of height `height` standing at `base`.
pub fn grasp_point(base: &Vector3<f64>, height: f64) -> Vector3<f64> {
    base + Vector3::new(0.0, 0.0, height - GRASP_DEPTH)
}

/// Top-down approach ending at a neck grasp, then lift, carry and put the
/// bottle down at [`PLACE_OFFSET`].
pub fn demo_segments(base: &Vector3<f64>, height: f64) -> Vec<Trajectory> {
    let grasp = grasp_point(base, height);
    let approach = (0..=24)
        .map(|i| {
            let s = i as f64 / 24.0;
            // swing in from above and aside, then descend onto the neck
            let e = 1.0 - (1.0 - s).powi(3);
            let sway = if i == 24 { 0.0 } else { 0.05 * (PI * s).sin() };
            let t = grasp + Vector3::new(0.25 * (1.0 - e), sway, 0.2 * (1.0 - s).powi(2));
            pose(t)
        })
        .collect();
    let place = Vector3::from(PLACE_OFFSET);
    let carry = (0..=30)
        .map(|i| {
            let s = i as f64 / 30.0;
            let lift = 0.1 * (PI * s).sin();
            let glide = 0.5 * (1.0 - (PI * s).cos());
            pose(grasp + place * glide + Vector3::new(0.0, 0.0, lift))
        })
        .collect();
    vec![Trajectory::new(approach).expect("25 poses"), Trajectory::new(carry).expect("31 poses")]
}

/// Indices of the vertices touched by the two fingers: the neck vertices
/// nearest to the grasp point offset along ±y.
pub fn contact_vertices(mesh: &TriangleMesh, base: &Vector3<f64>, height: f64) -> [usize; 2] {
    let g = Point3::from(grasp_point(base, height));
    [1.0, -1.0].map(|s| mesh.nearest_vertex(&(g + Vector3::new(0.0, s * 0.03, 0.0))))
}

pub fn contacts_at(mesh: &TriangleMesh, vertices: [usize; 2]) -> ContactSet {
    let v = mesh.vertices();
    ContactSet::new().with_finger("left", vec![v[vertices[0]]]).with_finger("right", vec![v[vertices[1]]])
}

/// Annotated RIF and EIF on the target bottle (standing at the origin):
/// contacts at the same parametric vertices as in the demonstration, and
/// the base resting on the table.
pub fn target_ground_truth(lambda_d: f64, lambda_p: f64) -> Result<(SurfaceFunction, SurfaceFunction), PipelineError> {
    let demo = bottle_mesh(&demo_bottle_params(), "bottle");
    let target = bottle_mesh(&target_bottle_params(), "bottle_b");
    let ids = contact_vertices(&demo, &Vector3::zeros(), demo_bottle_params().total_height());
    let map_err = |e| PipelineError::Interaction { stage: super::Stage::Evaluation, source: e };
    let rif = compute_rif(&target, &contacts_at(&target, ids), lambda_d).map_err(map_err)?;
    let eif = compute_eif(&target, &PlaneModel::horizontal(0.0), lambda_p).map_err(map_err)?;
    Ok((rif, eif))
}

/// A cluttered scene for object selection: one bottle among distractors of
/// other categories.
#[derive(Debug, Clone)]
pub struct SelectionScene {
    pub objects: Vec<TriangleMesh>,
    /// Index of the bottle in `objects`.
    pub target: usize,
}

fn random_bump(rng: &mut impl Rng, mesh: &TriangleMesh) -> (Point3<f64>, f64, f64) {
    let v = mesh.vertices();
    let c = v[rng.random_range(0..v.len())];
    let scale = mesh.bbox_diagonal();
    (c, scale * rng.random_range(0.08..0.14), scale * rng.random_range(0.02..0.04))
}

/// Seeded scene with a randomly proportioned bottle and three distractors
/// (ring, box, ellipsoid), in shuffled order.
pub fn selection_scene(seed: u64) -> SelectionScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = BottleParams {
        body_radius: rng.random_range(0.03..0.042),
        body_height: rng.random_range(0.1..0.14),
        shoulder_height: rng.random_range(0.03..0.05),
        neck_radius: rng.random_range(0.011..0.015),
        neck_height: rng.random_range(0.03..0.05),
        ellipticity: rng.random_range(0.0..0.12),
        neck_lean: rng.random_range(0.0..0.008),
        bump: Some((rng.random_range(-PI..PI), rng.random_range(0.04..0.1), 0.02, rng.random_range(0.002..0.005))),
    };
    let bottle = shapes::bottle(&params, 32, 24).with_id("bottle");
    let major = rng.random_range(0.04..0.06);
    let ring = shapes::torus(major, major * rng.random_range(0.25..0.45), 36, 18);
    let (bx, by, bz) = (rng.random_range(0.05..0.1), rng.random_range(0.05..0.1), rng.random_range(0.05..0.12));
    let cuboid = shapes::cuboid(bx, by, bz, 12);
    let egg = shapes::ellipsoid(rng.random_range(0.03..0.05), rng.random_range(0.03..0.05), rng.random_range(0.05..0.08), 3);
    let mut objects = vec![bottle];
    for (m, id) in [(ring, "ring"), (cuboid, "box"), (egg, "ellipsoid")] {
        let bumps = [random_bump(&mut rng, &m), random_bump(&mut rng, &m)];
        objects.push(shapes::with_bumps(&m, &bumps).with_id(id));
    }
    objects.shuffle(&mut rng);
    let target = objects.iter().position(|m| m.id() == "bottle").expect("bottle is in the scene");
    SelectionScene { objects, target }
}

/// Two bottles: the target bottle of the dataset and a slender wine bottle
/// that is further from the demonstrated one. The first is the closer.
pub fn two_bottle_scene() -> [TriangleMesh; 2] {
    let wine = BottleParams {
        body_radius: 0.028,
        body_height: 0.2,
        shoulder_height: 0.06,
        neck_radius: 0.01,
        neck_height: 0.09,
        ellipticity: 0.0,
        neck_lean: 0.0,
        bump: Some((1.2, 0.1, 0.02, 0.003)),
    };
    [bottle_mesh(&target_bottle_params(), "bottle_b"), bottle_mesh(&wine, "wine")]
}

/// Paths of a written dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: PathBuf,
    pub scene: PathBuf,
    pub rif_truth: PathBuf,
    pub eif_truth: PathBuf,
}

/// Where the target bottle stands in the new scene.
pub const TARGET_BASE: [f64; 3] = [0.02, -0.08, 0.0];

/// Writes `demo/` (recording manifest and inputs), `scene/` (meshes and
/// `scene.json`) and `truth/` (per-vertex CSVs) under `root`.
pub fn write_dataset(root: &Path) -> Result<Dataset, PipelineError> {
    let demo_dir = root.join("demo");
    let scene_dir = root.join("scene");
    let truth_dir = root.join("truth");
    for d in [&demo_dir.join("meshes"), &scene_dir, &truth_dir] {
        fs::create_dir_all(d).map_err(|e| PipelineError::input(d, e))?;
    }

    let bottle = bottle_mesh(&demo_bottle_params(), "bottle");
    let crate_box = crate_mesh().map_vertices(|p| p + Vector3::new(0.18, -0.2, 0.0));
    write_mesh(&demo_dir.join("meshes/bottle.off"), &bottle)?;
    write_mesh(&demo_dir.join("meshes/crate.off"), &crate_box)?;
    let height = demo_bottle_params().total_height();
    let segments = demo_segments(&Vector3::zeros(), height);
    write_json(&demo_dir.join("approach.json"), &segments[0])?;
    write_json(&demo_dir.join("carry.json"), &segments[1])?;
    write_json(&demo_dir.join("contacts.json"), &contacts_at(&bottle, contact_vertices(&bottle, &Vector3::zeros(), height)))?;
    write_json(&demo_dir.join("planes.json"), &json!([{ "origin": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0] }]))?;
    let manifest = demo_dir.join("manifest.json");
    write_json(
        &manifest,
        &json!({
            "skill": "place",
            "date": "2026-10-19",
            "scene_id": "demo",
            "objects": ["meshes/bottle.off", "meshes/crate.off"],
            "planes": "planes.json",
            "normal_orientation": "into_free_space",
            "operations": [{ "trajectories": ["approach.json", "carry.json"], "contacts": "contacts.json" }],
            "config": { "seed": 7 }
        }),
    )?;

    let base = Vector3::from(TARGET_BASE);
    let target = bottle_mesh(&target_bottle_params(), "bottle_b").map_vertices(|p| p + base);
    let ring = ring_mesh().map_vertices(|p| p + Vector3::new(-0.2, 0.05, 0.018));
    let block = block_mesh().map_vertices(|p| p + Vector3::new(0.2, 0.12, 0.0));
    write_mesh(&scene_dir.join("bottle_b.off"), &target)?;
    write_mesh(&scene_dir.join("ring.off"), &ring)?;
    write_mesh(&scene_dir.join("block.off"), &block)?;
    let start = pose(Vector3::new(0.3, 0.0, 0.35)).to_waypoint();
    write_json(&scene_dir.join(super::SCENE_FILE), &json!({ "id": "new", "start": start }))?;

    let (rif, eif) = target_ground_truth(crate::interaction::DEFAULT_LAMBDA_D, crate::interaction::DEFAULT_LAMBDA_P)?;
    let rif_truth = truth_dir.join("rif.csv");
    let eif_truth = truth_dir.join("eif.csv");
    write_csv(&rif_truth, &rif.values)?;
    write_csv(&eif_truth, &eif.values)?;
    Ok(Dataset { manifest, scene: scene_dir, rif_truth, eif_truth })
}

fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    write_off(mesh, &mut buf).map_err(|e| PipelineError::input(path, e))?;
    fs::write(path, buf).map_err(|e| PipelineError::input(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::input(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::input(path, e))
}

fn write_csv(path: &Path, values: &[f64]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    write_function_csv(values, &mut buf).map_err(|e| PipelineError::input(path, e))?;
    fs::write(path, buf).map_err(|e| PipelineError::input(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contacts_sit_on_the_neck() {
        let p = demo_bottle_params();
        let m = bottle_mesh(&p, "bottle");
        let [a, b] = contact_vertices(&m, &Vector3::zeros(), p.total_height());
        let (pa, pb) = (m.vertices()[a], m.vertices()[b]);
        assert!(pa.y > 0.01 && pb.y < -0.01);
        let h = p.total_height() - GRASP_DEPTH;
        assert!((pa.z - h).abs() < 0.006 && (pb.z - h).abs() < 0.006);
        assert!(m.distance_to_surface(&pa) < 1e-12);
    }

    #[test]
    fn demo_ends_where_the_bottle_is_put_down() {
        let s = demo_segments(&Vector3::zeros(), 0.2);
        assert_eq!(s[0].last(), s[1].first());
        let d = *s[1].last() * s[0].last().conj();
        assert!((d.translation() - Vector3::from(PLACE_OFFSET)).norm() < 1e-12);
        let a = s[0].last().rotation().rotate(&Vector3::z());
        assert!((a - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
