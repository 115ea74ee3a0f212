use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{AtStage, PipelineConfig, PipelineError, Stage};
use crate::fmap::{FunctionKind, SurfaceFunction};
use crate::imitation::{ImitationError, Trajectory};
use crate::interaction::{
    apply_task_displacement, compute_eif, compute_rif, select_demo_object, ContactSet, NormalOrientation, PlaneModel,
};
use crate::mesh::{load_mesh, write_off, MeshFormat, TriangleMesh};
use crate::screw::{UnitDualQuaternion, Waypoint};

pub const BUNDLE_FILE: &str = "bundle.json";
const MESH_DIR: &str = "meshes";

/// Objects and environment planes of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub objects: Vec<TriangleMesh>,
    pub planes: Vec<PlaneModel>,
}

impl Scene {
    pub fn new(id: impl Into<String>, objects: Vec<TriangleMesh>, planes: Vec<PlaneModel>) -> Result<Self, PipelineError> {
        let scene = Self { id: id.into(), objects, planes };
        let mut seen = BTreeSet::new();
        for m in &scene.objects {
            if !seen.insert(m.id()) {
                return Err(PipelineError::BundleInconsistent(format!("duplicate object id `{}`", m.id())));
            }
        }
        Ok(scene)
    }

    pub fn object(&self, id: &str) -> Option<&TriangleMesh> {
        self.objects.iter().find(|m| m.id() == id)
    }
}

/// One demonstrated operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRecord {
    /// Selected object id.
    pub object: String,
    /// Demonstrated segments: the approach to the grasp/contact pose, then
    /// any manipulation that follows.
    pub segments: Vec<Trajectory>,
    pub contacts: ContactSet,
    /// Tool z-axis at the grasp pose (world frame).
    pub approach: [f64; 3],
    /// World-frame displacement of the object between grasp and release.
    pub displacement: Waypoint,
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub functions: Vec<SurfaceFunction>,
}

impl SkillRecord {
    /// End pose of the first segment.
    pub fn grasp_pose(&self) -> &UnitDualQuaternion {
        self.segments[0].last()
    }

    pub fn function(&self, kind: FunctionKind) -> Option<&SurfaceFunction> {
        self.functions.iter().find(|f| f.kind == kind)
    }

    pub fn eifs(&self) -> impl Iterator<Item = &SurfaceFunction> {
        self.functions.iter().filter(|f| f.kind == FunctionKind::Eif)
    }

    /// Grasp-and-move operations carry an environment function and a
    /// manipulation segment; everything else is a contact-only skill.
    pub fn is_grasp(&self) -> bool {
        self.segments.len() >= 2 && self.eifs().next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationBundle {
    pub skill: String,
    pub date: String,
    pub scene: Scene,
    pub operations: Vec<SkillRecord>,
    pub config: PipelineConfig,
}

impl DemonstrationBundle {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.operations.is_empty() {
            return Err(PipelineError::BundleInconsistent("no operations".into()));
        }
        for (i, op) in self.operations.iter().enumerate() {
            let mesh = self
                .scene
                .object(&op.object)
                .ok_or_else(|| PipelineError::BundleInconsistent(format!("operation {i} selects unknown object `{}`", op.object)))?;
            if op.segments.is_empty() {
                return Err(PipelineError::BundleInconsistent(format!("operation {i} has no trajectory")));
            }
            for f in &op.functions {
                if f.mesh_id != op.object || f.len() != mesh.vertex_count() {
                    return Err(PipelineError::BundleInconsistent(format!(
                        "operation {i}: {:?} function on `{}` with {} values does not fit `{}` ({} vertices)",
                        f.kind,
                        f.mesh_id,
                        f.len(),
                        op.object,
                        mesh.vertex_count()
                    )));
                }
                f.validate().at(Stage::Load)?;
            }
            if op.function(FunctionKind::Rif).is_none() {
                return Err(PipelineError::BundleInconsistent(format!("operation {i} has no robot interaction function")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PlaneJson {
    origin: [f64; 3],
    normal: [f64; 3],
    #[serde(default)]
    orientation: NormalOrientation,
}

impl PlaneJson {
    fn model(&self, fallback: NormalOrientation, explicit: bool) -> Result<PlaneModel, crate::interaction::InteractionError> {
        let o = if explicit { self.orientation } else { fallback };
        PlaneModel::new(Point3::from(self.origin), Vector3::from(self.normal), o)
    }

    fn from_model(p: &PlaneModel) -> Self {
        let (o, n) = (p.origin(), p.normal());
        Self { origin: [o.x, o.y, o.z], normal: [n.x, n.y, n.z], orientation: NormalOrientation::IntoFreeSpace }
    }
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    id: String,
    /// Mesh files relative to the bundle directory.
    objects: Vec<String>,
    planes: Vec<PlaneJson>,
}

#[derive(Serialize, Deserialize)]
struct BundleJson {
    skill: String,
    date: String,
    scene: SceneJson,
    operations: Vec<SkillRecord>,
    config: PipelineConfig,
}

/// Writes `bundle.json` and the scene meshes (`meshes/<id>.off`).
pub fn persist_bundle(bundle: &DemonstrationBundle, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    let mesh_dir = dir.join(MESH_DIR);
    fs::create_dir_all(&mesh_dir).map_err(|e| PipelineError::input(&mesh_dir, e))?;
    let mut objects = Vec::new();
    for m in &bundle.scene.objects {
        let rel = format!("{MESH_DIR}/{}.off", m.id());
        let path = dir.join(&rel);
        let mut buf = Vec::new();
        write_off(m, &mut buf).map_err(|e| PipelineError::input(&path, e))?;
        fs::write(&path, buf).map_err(|e| PipelineError::input(&path, e))?;
        objects.push(rel);
    }
    let json = BundleJson {
        skill: bundle.skill.clone(),
        date: bundle.date.clone(),
        scene: SceneJson { id: bundle.scene.id.clone(), objects, planes: bundle.scene.planes.iter().map(PlaneJson::from_model).collect() },
        operations: bundle.operations.clone(),
        config: bundle.config,
    };
    let path = dir.join(BUNDLE_FILE);
    let mut text = serde_json::to_string_pretty(&json).map_err(|e| PipelineError::input(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| PipelineError::input(&path, e))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<DemonstrationBundle, PipelineError> {
    let dir = dir.as_ref();
    let path = dir.join(BUNDLE_FILE);
    let raw: BundleJson = read_json(&path)?;
    let objects = raw.scene.objects.iter().map(|rel| load_any_mesh(&dir.join(rel))).collect::<Result<Vec<_>, _>>()?;
    let planes = raw
        .scene
        .planes
        .iter()
        .map(|p| p.model(NormalOrientation::IntoFreeSpace, true))
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Load)?;
    let bundle = DemonstrationBundle {
        skill: raw.skill,
        date: raw.date,
        scene: Scene::new(raw.scene.id, objects, planes)?,
        operations: raw.operations,
        config: raw.config,
    };
    bundle.config.validate()?;
    bundle.validate()?;
    Ok(bundle)
}

/// Recording inputs; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub skill: String,
    #[serde(default)]
    pub date: String,
    #[serde(default)]
    pub scene_id: Option<String>,
    pub objects: Vec<PathBuf>,
    /// JSON list of `{origin, normal}`.
    #[serde(default)]
    pub planes: Option<PathBuf>,
    /// Declared direction of the recorded plane normals.
    #[serde(default)]
    pub normal_orientation: NormalOrientation,
    pub operations: Vec<OperationInput>,
    #[serde(default)]
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationInput {
    /// One trajectory file per segment.
    pub trajectories: Vec<PathBuf>,
    pub contacts: PathBuf,
}

impl RecordManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf), PipelineError> {
        let path = path.as_ref();
        let manifest: Self = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }
}

/// Reads a trajectory file; an empty file is a zero-length trajectory.
pub fn load_trajectory(path: &Path) -> Result<Trajectory, PipelineError> {
    #[derive(Deserialize)]
    struct Raw {
        waypoints: Vec<Waypoint>,
        #[serde(default)]
        timestamps: Option<Vec<f64>>,
    }
    let text = fs::read_to_string(path).map_err(|e| PipelineError::input(path, e))?;
    if text.trim().is_empty() {
        return Err(ImitationError::TooShort { needed: 2, found: 0 }).at(Stage::Load);
    }
    let raw: Raw = serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e))?;
    let poses = raw.waypoints.iter().map(Waypoint::to_pose).collect::<Result<Vec<_>, _>>().map_err(|e| PipelineError::input(path, e))?;
    let traj = Trajectory::new(poses).at(Stage::Load)?;
    match raw.timestamps {
        Some(t) => traj.with_timestamps(t).at(Stage::Load),
        None => Ok(traj),
    }
}

/// Runs the demonstration stage for every operation of the manifest.
pub fn record_bundle(manifest: &RecordManifest, base: &Path) -> Result<DemonstrationBundle, PipelineError> {
    let config = manifest.config;
    config.validate()?;
    let objects = manifest.objects.iter().map(|p| load_any_mesh(&base.join(p))).collect::<Result<Vec<_>, _>>()?;
    let planes = match &manifest.planes {
        Some(p) => {
            let path = base.join(p);
            let raw: Vec<PlaneJson> = read_json(&path)?;
            raw.iter().map(|q| q.model(manifest.normal_orientation, false)).collect::<Result<Vec<_>, _>>().at(Stage::Load)?
        }
        None => Vec::new(),
    };
    let scene = Scene::new(manifest.scene_id.clone().unwrap_or_else(|| manifest.skill.clone()), objects, planes)?;
    let mut operations = Vec::with_capacity(manifest.operations.len());
    for op in &manifest.operations {
        let segments = op.trajectories.iter().map(|p| load_trajectory(&base.join(p))).collect::<Result<Vec<_>, _>>()?;
        if segments.is_empty() {
            return Err(ImitationError::TooShort { needed: 1, found: 0 }).at(Stage::Record);
        }
        let cpath = base.join(&op.contacts);
        let contacts: ContactSet = read_json(&cpath)?;
        operations.push(record_operation(&scene, segments, contacts, &config)?);
    }
    let bundle = DemonstrationBundle { skill: manifest.skill.clone(), date: manifest.date.clone(), scene, operations, config };
    bundle.validate()?;
    Ok(bundle)
}

/// Selects the object touched at the end of the first segment, builds its
/// RIF from the contacts and, after the grasp-to-release displacement, one
/// EIF per plane it ends up touching.
pub(crate) fn record_operation(
    scene: &Scene,
    segments: Vec<Trajectory>,
    contacts: ContactSet,
    config: &PipelineConfig,
) -> Result<SkillRecord, PipelineError> {
    let grasp = *segments[0].last();
    let index = select_demo_object(&scene.objects, &grasp).at(Stage::Record)?;
    let mesh = &scene.objects[index];
    let mut functions = vec![compute_rif(mesh, &contacts, config.lambda_d).at(Stage::Record)?];
    // the object rides with the gripper from the grasp to the end pose
    let end = *segments.last().expect("non-empty").last();
    let displacement = if segments.len() >= 2 { end * grasp.conj() } else { UnitDualQuaternion::IDENTITY };
    let moved = apply_task_displacement(mesh, &displacement);
    for plane in &scene.planes {
        let eif = compute_eif(&moved, plane, config.lambda_p).at(Stage::Record)?;
        if eif.values.contains(&1.0) {
            functions.push(eif);
        }
    }
    let a = grasp.rotation().rotate(&Vector3::z());
    Ok(SkillRecord {
        object: mesh.id().to_string(),
        segments,
        contacts,
        approach: [a.x, a.y, a.z],
        displacement: displacement.to_waypoint(),
        lambda_d: config.lambda_d,
        lambda_p: config.lambda_p,
        functions,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e))
}

pub(crate) fn load_any_mesh(path: &Path) -> Result<TriangleMesh, PipelineError> {
    let format = MeshFormat::from_path(path).ok_or_else(|| PipelineError::input(path, "unknown mesh extension"))?;
    load_mesh(path, format).at(Stage::Load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn pose(x: f64, y: f64, z: f64) -> UnitDualQuaternion {
        UnitDualQuaternion::from_translation(&Vector3::new(x, y, z))
    }

    fn scene() -> Scene {
        let cube = shapes::cuboid(0.1, 0.1, 0.1, 4).with_id("cube");
        let far = shapes::cuboid(0.1, 0.1, 0.1, 4).map_vertices(|p| p + Vector3::new(1.0, 0.0, 0.0)).with_id("far");
        Scene::new("s", vec![cube, far], vec![PlaneModel::horizontal(0.0)]).unwrap()
    }

    #[test]
    fn grasp_and_place_records_rif_and_eif() {
        let s = scene();
        let grasp = pose(0.05, 0.05, 0.1);
        let approach = Trajectory::new(vec![pose(0.05, 0.05, 0.3), grasp]).unwrap();
        let lift = Trajectory::new(vec![grasp, pose(0.05, 0.05, 0.2), pose(0.25, 0.05, 0.1)]).unwrap();
        let contacts = ContactSet::new().with_finger("tip", vec![Point3::new(0.05, 0.05, 0.1)]);
        let rec = record_operation(&s, vec![approach, lift], contacts, &PipelineConfig::default()).unwrap();
        assert_eq!(rec.object, "cube");
        assert_eq!(rec.functions.len(), 2);
        assert!(rec.is_grasp());
        let d = rec.displacement.to_pose().unwrap();
        assert!((d.translation() - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
        // the cube slid along the table: its bottom still touches
        let eif = rec.function(FunctionKind::Eif).unwrap();
        let bottom = s.objects[0].vertices().iter().filter(|v| v.z == 0.0).count();
        assert_eq!(eif.values.iter().filter(|&&v| v == 1.0).count(), bottom);
    }

    #[test]
    fn contact_only_has_rif() {
        let mut s = scene();
        s.planes.clear();
        let t = Trajectory::new(vec![pose(0.05, 0.05, 0.3), pose(0.05, 0.05, 0.1)]).unwrap();
        let contacts = ContactSet::new().with_finger("tip", vec![Point3::new(0.05, 0.05, 0.1)]);
        let rec = record_operation(&s, vec![t], contacts, &PipelineConfig::default()).unwrap();
        assert_eq!(rec.functions.len(), 1);
        assert!(!rec.is_grasp());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = shapes::cuboid(0.1, 0.1, 0.1, 2).with_id("x");
        assert!(Scene::new("s", vec![a.clone(), a], vec![]).is_err());
    }
}
