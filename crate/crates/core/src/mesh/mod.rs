//! Triangle meshes, file ingestion and the discrete Laplace-Beltrami spectrum.

mod io;
mod laplacian;
mod spectral;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

pub use io::{load_mesh, parse_mesh, write_off, MeshFormat};
pub use laplacian::{cotangent_laplacian, CotanLaplacian, MAX_COTANGENT};
pub use spectral::{spectral_basis, spectral_basis_with, EigenConfig, SpectralBasis};

/// Vertices closer than this (meters) are merged during cleanup.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// A triangle whose doubled area falls below this fraction of its squared
/// longest edge is treated as zero-area.
const DEGENERATE_RATIO: f64 = 1e-12;

#[derive(Error, Debug)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("mesh `{0}` has no faces left after cleanup")]
    EmptyMesh(String),

    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },

    #[error("numerical degeneracy: cotangent magnitude {value:.3e} on face {face}")]
    NumericalDegeneracy { face: usize, value: f64 },

    #[error("spectral pipeline needs at least {needed} vertices, mesh `{id}` has {found}")]
    TooFewVertices { id: String, needed: usize, found: usize },

    #[error("invalid basis size k={k} for a mesh with {vertices} vertices")]
    InvalidBasisSize { k: usize, vertices: usize },

    #[error("eigensolver did not converge: {0}")]
    SolverFailure(String),
}

/// A cleaned triangle mesh in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    id: String,
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh from raw arrays and runs the ingestion cleanup: duplicate
    /// vertices within [`MERGE_TOLERANCE`] are merged, zero-area faces are
    /// dropped and vertices no face references are removed. Surviving vertices
    /// keep their relative order.
    pub fn new(
        id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let id = id.into();
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange { face: f, index, count: vertices.len() });
                }
            }
        }

        let remap = merge_duplicates(&vertices);
        let mut kept_faces = Vec::with_capacity(faces.len());
        for face in &faces {
            let f = [remap[face[0]], remap[face[1]], remap[face[2]]];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                continue;
            }
            if is_degenerate(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) {
                continue;
            }
            kept_faces.push(f);
        }
        if kept_faces.is_empty() {
            return Err(MeshError::EmptyMesh(id));
        }

        let mut used = vec![false; vertices.len()];
        for f in &kept_faces {
            for &i in f {
                used[i] = true;
            }
        }
        let mut compact = vec![usize::MAX; vertices.len()];
        let mut kept_vertices = Vec::new();
        for (i, p) in vertices.iter().enumerate() {
            if used[i] {
                compact[i] = kept_vertices.len();
                kept_vertices.push(*p);
            }
        }
        for f in &mut kept_faces {
            for i in f.iter_mut() {
                *i = compact[*i];
            }
        }

        Ok(Self { id, vertices: kept_vertices, faces: kept_faces })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (pa, pb, pc) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Returns a copy with every vertex mapped through `f`. Connectivity is
    /// kept as is, so `f` must not collapse triangles.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Reorders vertices so that new vertex `i` is old vertex `perm[i]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.vertices.len());
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        Self {
            id: self.id.clone(),
            vertices: perm.iter().map(|&old| self.vertices[old]).collect(),
            faces: self
                .faces
                .iter()
                .map(|f| [inverse[f[0]], inverse[f[1]], inverse[f[2]]])
                .collect(),
        }
    }

    /// Closest surface point distance, brute force over faces.
    pub fn distance_to_surface(&self, p: &Point3<f64>) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let q = closest_point_on_triangle(p, &self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]);
                (p - q).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the vertex nearest to `p`; ties go to the lower index.
    pub fn nearest_vertex(&self, p: &Point3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

fn is_degenerate(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> bool {
    let ab = b - a;
    let ac = c - a;
    let bc = c - b;
    let longest = ab.norm_squared().max(ac.norm_squared()).max(bc.norm_squared());
    let doubled_area = ab.cross(&ac).norm();
    longest == 0.0 || doubled_area <= DEGENERATE_RATIO * longest
}

/// Maps every vertex to the lowest-index vertex within [`MERGE_TOLERANCE`].
fn merge_duplicates(vertices: &[Point3<f64>]) -> Vec<usize> {
    let cell = MERGE_TOLERANCE;
    let key = |p: &Point3<f64>| -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut remap = Vec::with_capacity(vertices.len());
    for (i, p) in vertices.iter().enumerate() {
        let k = key(p);
        let mut target = i;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in bucket {
                            if (vertices[j] - p).norm() <= MERGE_TOLERANCE {
                                target = j;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        if target == i {
            grid.entry(k).or_default().push(i);
        }
        remap.push(target);
    }
    remap
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub(crate) fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    #[test]
    fn duplicate_vertices_are_merged_and_order_kept() {
        let vertices = vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(1.0 + 1e-12, 0., 0.), p(1., 1., 0.)];
        let faces = vec![[0, 1, 2], [3, 4, 2]];
        let mesh = TriangleMesh::new("m", vertices, faces).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.faces(), &[[0, 1, 2], [1, 3, 2]]);
        assert_eq!(mesh.vertices()[3], p(1., 1., 0.));
    }

    #[test]
    fn zero_area_face_is_dropped() {
        let vertices = vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(2., 0., 0.)];
        let faces = vec![[0, 1, 2], [0, 1, 3]];
        let mesh = TriangleMesh::new("m", vertices, faces).unwrap();
        assert_eq!(mesh.face_count(), 1);
        // vertex 3 is only used by the dropped face
        assert_eq!(mesh.vertex_count(), 3);
    }

    #[test]
    fn all_faces_degenerate_is_empty_mesh() {
        let vertices = vec![p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.)];
        let err = TriangleMesh::new("flat", vertices, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::EmptyMesh(ref id) if id == "flat"));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let vertices = vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)];
        let err = TriangleMesh::new("m", vertices, vec![[0, 1, 5]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 5, .. }));
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.));
        assert!((closest_point_on_triangle(&p(0.2, 0.2, 1.0), &a, &b, &c) - p(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(closest_point_on_triangle(&p(-1., -1., 0.), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&p(0.5, -1., 0.), &a, &b, &c), p(0.5, 0., 0.));
    }
}
