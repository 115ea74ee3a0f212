//! Robot and environment interaction functions over an object's surface.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmap::{FunctionKind, SurfaceFunction};
use crate::mesh::TriangleMesh;
use crate::screw::UnitDualQuaternion;

/// Contacts farther than this from the selected surface are rejected (m).
pub const CONTACT_TOLERANCE: f64 = 0.005;
pub const DEFAULT_LAMBDA_D: f64 = 0.03;
pub const DEFAULT_LAMBDA_P: f64 = 0.005;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum InteractionError {
    #[error("scene contains no objects")]
    EmptyScene,

    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    #[error("contact {index} of finger `{finger}` is {distance:.4} m from the surface of `{mesh}`")]
    ContactOffSurface { finger: String, index: usize, distance: f64, mesh: String },

    #[error("contact set is empty")]
    NoContacts,

    #[error("plane normal has norm {0}, expected 1")]
    NonUnitNormal(f64),
}

/// Recorded contact points, keyed by finger name.
///
/// Serialized as `{"finger": [[x, y, z], …], …}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactSet {
    pub fingers: BTreeMap<String, Vec<[f64; 3]>>,
}

impl ContactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_finger(mut self, name: impl Into<String>, points: Vec<Point3<f64>>) -> Self {
        self.fingers.insert(name.into(), points.iter().map(|p| [p.x, p.y, p.z]).collect());
        self
    }

    pub fn finger_count(&self) -> usize {
        self.fingers.len()
    }

    /// All contact points in finger-name order.
    pub fn points(&self) -> impl Iterator<Item = Point3<f64>> + '_ {
        self.fingers.values().flatten().map(|p| Point3::from(*p))
    }

    pub fn is_empty(&self) -> bool {
        self.fingers.values().all(|v| v.is_empty())
    }

    /// Checks every point lies within [`CONTACT_TOLERANCE`] of the surface.
    pub fn validate(&self, mesh: &TriangleMesh) -> Result<(), InteractionError> {
        if self.is_empty() {
            return Err(InteractionError::NoContacts);
        }
        for (finger, pts) in &self.fingers {
            for (index, p) in pts.iter().enumerate() {
                let distance = mesh.distance_to_surface(&Point3::from(*p));
                if distance > CONTACT_TOLERANCE {
                    return Err(InteractionError::ContactOffSurface { finger: finger.clone(), index, distance, mesh: mesh.id().to_string() });
                }
            }
        }
        Ok(())
    }

    /// Replaces every point with its nearest mesh vertex.
    pub fn snapped(&self, mesh: &TriangleMesh) -> Self {
        let fingers = self
            .fingers
            .iter()
            .map(|(k, pts)| {
                let snapped = pts
                    .iter()
                    .map(|p| {
                        let v = mesh.vertices()[mesh.nearest_vertex(&Point3::from(*p))];
                        [v.x, v.y, v.z]
                    })
                    .collect();
                (k.clone(), snapped)
            })
            .collect();
        Self { fingers }
    }

    /// Rigidly moves every point.
    pub fn transformed(&self, x: &UnitDualQuaternion) -> Self {
        let fingers = self
            .fingers
            .iter()
            .map(|(k, pts)| {
                let moved = pts
                    .iter()
                    .map(|p| {
                        let q = x.transform_point(&Point3::from(*p));
                        [q.x, q.y, q.z]
                    })
                    .collect();
                (k.clone(), moved)
            })
            .collect();
        Self { fingers }
    }
}

/// Which way a recorded plane normal points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalOrientation {
    /// Away from the environment, into free space (e.g. up from a table top).
    #[default]
    IntoFreeSpace,
    /// Into the environment's material.
    IntoEnvironment,
}

/// Environment plane through `origin`; `normal` always points into free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    origin: Point3<f64>,
    normal: Vector3<f64>,
}

impl PlaneModel {
    pub fn new(origin: Point3<f64>, normal: Vector3<f64>, orientation: NormalOrientation) -> Result<Self, InteractionError> {
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-9 || !n.is_finite() {
            return Err(InteractionError::NonUnitNormal(n));
        }
        let normal = match orientation {
            NormalOrientation::IntoFreeSpace => normal,
            NormalOrientation::IntoEnvironment => -normal,
        };
        Ok(Self { origin, normal })
    }

    /// Plane `z = height` with normal `+z`.
    pub fn horizontal(height: f64) -> Self {
        Self { origin: Point3::new(0.0, 0.0, height), normal: Vector3::z() }
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    /// Positive on the free-space side.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.origin).dot(&self.normal)
    }

    pub fn transformed(&self, x: &UnitDualQuaternion) -> Self {
        Self { origin: x.transform_point(&self.origin), normal: x.transform_vector(&self.normal) }
    }
}

/// Index of the object closest to the end-effector position of `last_pose`
/// (minimum vertex distance; ties by index).
pub fn select_demo_object(scene: &[TriangleMesh], last_pose: &UnitDualQuaternion) -> Result<usize, InteractionError> {
    let p = Point3::from(last_pose.translation());
    let mut best: Option<(usize, f64)> = None;
    for (i, mesh) in scene.iter().enumerate() {
        let d = mesh.vertices().iter().map(|v| (v - p).norm()).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(InteractionError::EmptyScene)
}

/// `RIF(p) = max_f max(1 − ‖Q̄_f − p‖ / λ_D, 0)`, with every recorded point
/// of every finger acting as a contact centre.
pub fn compute_rif(mesh: &TriangleMesh, contacts: &ContactSet, lambda_d: f64) -> Result<SurfaceFunction, InteractionError> {
    if !(lambda_d > 0.0) {
        return Err(InteractionError::InvalidThreshold(lambda_d));
    }
    contacts.validate(mesh)?;
    let centres: Vec<Point3<f64>> = contacts.points().collect();
    let values = mesh
        .vertices()
        .iter()
        .map(|v| centres.iter().map(|c| (1.0 - (v - c).norm() / lambda_d).max(0.0)).fold(0.0, f64::max))
        .collect();
    Ok(SurfaceFunction { mesh_id: mesh.id().to_string(), kind: FunctionKind::Rif, values })
}

/// The mesh after the world-frame rigid displacement `x`.
pub fn apply_task_displacement(mesh: &TriangleMesh, x: &UnitDualQuaternion) -> TriangleMesh {
    mesh.map_vertices(|p| x.transform_point(p))
}

/// 1 where the vertex lies within `λ_p` of the plane on its free-space side
/// (or below it), 0 elsewhere.
pub fn compute_eif(mesh: &TriangleMesh, plane: &PlaneModel, lambda_p: f64) -> Result<SurfaceFunction, InteractionError> {
    if !(lambda_p > 0.0) {
        return Err(InteractionError::InvalidThreshold(lambda_p));
    }
    let values = mesh.vertices().iter().map(|p| if plane.signed_distance(p) <= lambda_p { 1.0 } else { 0.0 }).collect();
    Ok(SurfaceFunction { mesh_id: mesh.id().to_string(), kind: FunctionKind::Eif, values })
}
