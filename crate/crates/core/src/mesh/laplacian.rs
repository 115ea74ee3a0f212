use std::collections::BTreeMap;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::{MeshError, TriangleMesh};

/// Cotangents larger than this indicate a near-degenerate triangle.
pub const MAX_COTANGENT: f64 = 1e8;

/// Cotangent stiffness matrix and lumped vertex masses.
///
/// Off-diagonal entries are `(cot α + cot β) / 2` (one term on boundary
/// edges) and the diagonal is minus the row sum, so `W` is negative
/// semi-definite and `-W φ = λ M φ` has non-negative eigenvalues.
#[derive(Debug, Clone)]
pub struct CotanLaplacian {
    pub stiffness: SparseColMat<usize, f64>,
    /// One third of the incident triangle area per vertex (m²).
    pub mass: Vec<f64>,
}

impl CotanLaplacian {
    pub fn size(&self) -> usize {
        self.mass.len()
    }

    /// `W x` for a single vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let col = Mat::from_fn(x.len(), 1, |i, _| x[i]);
        let y = &self.stiffness * &col;
        (0..x.len()).map(|i| y[(i, 0)]).collect()
    }

    pub fn dense_stiffness(&self) -> Mat<f64> {
        self.stiffness.to_dense()
    }
}

pub fn cotangent_laplacian(mesh: &TriangleMesh) -> Result<CotanLaplacian, MeshError> {
    let n = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut off: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut mass = vec![0.0; n];

    for (f, face) in mesh.faces().iter().enumerate() {
        let area = mesh.face_area(f);
        for &v in face {
            mass[v] += area / 3.0;
        }
        for corner in 0..3 {
            let k = face[corner];
            let i = face[(corner + 1) % 3];
            let j = face[(corner + 2) % 3];
            let a = verts[i] - verts[k];
            let b = verts[j] - verts[k];
            let cross = a.cross(&b).norm();
            let cot = a.dot(&b) / cross;
            if !cot.is_finite() || cot.abs() > MAX_COTANGENT {
                return Err(MeshError::NumericalDegeneracy { face: f, value: cot });
            }
            let key = if i < j { (i, j) } else { (j, i) };
            *off.entry(key).or_insert(0.0) += 0.5 * cot;
        }
    }

    let mut diag = vec![0.0; n];
    let mut triplets = Vec::with_capacity(2 * off.len() + n);
    for (&(i, j), &w) in &off {
        triplets.push(Triplet::new(i, j, w));
        triplets.push(Triplet::new(j, i, w));
        diag[i] -= w;
        diag[j] -= w;
    }
    for (i, &d) in diag.iter().enumerate() {
        triplets.push(Triplet::new(i, i, d));
    }
    let stiffness = SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| MeshError::SolverFailure(format!("sparse assembly failed: {e:?}")))?;
    Ok(CotanLaplacian { stiffness, mass })
}
