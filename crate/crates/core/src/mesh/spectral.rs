use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cotangent_laplacian, CotanLaplacian, MeshError, TriangleMesh};

/// Eigensolver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenConfig {
    /// Meshes with at most this many vertices use a dense decomposition.
    pub dense_threshold: usize,
    /// Seed for the Krylov starting block.
    pub seed: u64,
    pub block_size: usize,
    /// Target for `‖Lφ − λMφ‖ / (‖Mφ‖ λ_max)` on every returned pair, with
    /// `λ_max` the largest requested eigenvalue.
    pub tolerance: f64,
    /// Relative shift `σ = −shift · tr(L)/tr(M)` for the factorization.
    pub shift: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { dense_threshold: 2000, seed: 0, block_size: 12, tolerance: 1e-8, shift: 1e-8 }
    }
}

/// First `k` generalized eigenpairs of the cotangent Laplacian,
/// mass-orthonormal and sorted by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    mesh_id: String,
    eigenfunctions: Mat<f64>,
    eigenvalues: Vec<f64>,
    mass: Vec<f64>,
}

impl SpectralBasis {
    /// Assembles a basis from precomputed parts; columns must already be
    /// mass-orthonormal.
    pub fn from_parts(mesh_id: impl Into<String>, eigenfunctions: Mat<f64>, eigenvalues: Vec<f64>, mass: Vec<f64>) -> Self {
        assert_eq!(eigenfunctions.ncols(), eigenvalues.len());
        assert_eq!(eigenfunctions.nrows(), mass.len());
        Self { mesh_id: mesh_id.into(), eigenfunctions, eigenvalues, mass }
    }

    pub fn mesh_id(&self) -> &str {
        &self.mesh_id
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn eigenfunctions(&self) -> MatRef<'_, f64> {
        self.eigenfunctions.as_ref()
    }

    /// The leading `k` columns.
    pub fn leading(&self, k: usize) -> MatRef<'_, f64> {
        self.eigenfunctions.as_ref().subcols(0, k)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn truncated(&self, k: usize) -> Self {
        assert!(k <= self.k());
        Self {
            mesh_id: self.mesh_id.clone(),
            eigenfunctions: self.eigenfunctions.subcols(0, k).to_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            mass: self.mass.clone(),
        }
    }

    /// Rescales to unit total area: eigenvalues times the area, masses
    /// divided by it, eigenfunctions times its square root. Orthonormality
    /// is preserved and the result no longer depends on the object's size.
    pub fn area_normalized(&self) -> Self {
        let area = self.total_mass();
        let root = area.sqrt();
        Self {
            mesh_id: self.mesh_id.clone(),
            eigenfunctions: Mat::from_fn(self.vertex_count(), self.k(), |i, j| self.eigenfunctions[(i, j)] * root),
            eigenvalues: self.eigenvalues.iter().map(|l| l * area).collect(),
            mass: self.mass.iter().map(|m| m / area).collect(),
        }
    }

    /// Returns a copy with column `j` negated.
    pub fn with_flipped_column(&self, j: usize) -> Self {
        let mut out = self.clone();
        for i in 0..out.vertex_count() {
            out.eigenfunctions[(i, j)] = -out.eigenfunctions[(i, j)];
        }
        out
    }

    /// `Φᵀ M Φ − I`, largest absolute entry.
    pub fn orthonormality_residual(&self) -> f64 {
        let phi = self.eigenfunctions.as_ref();
        let m_phi = Mat::from_fn(phi.nrows(), phi.ncols(), |i, j| self.mass[i] * phi[(i, j)]);
        let gram = phi.transpose() * &m_phi;
        let mut worst: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `‖Lφ_i − λ_i Mφ_i‖ / ‖Mφ_i‖` for each column, with `L = −W`.
    pub fn eigen_residuals(&self, lap: &CotanLaplacian) -> Vec<f64> {
        let phi = self.eigenfunctions.as_ref();
        let l_phi = &lap.stiffness * phi;
        (0..self.k())
            .map(|j| {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..phi.nrows() {
                    let mphi = lap.mass[i] * phi[(i, j)];
                    let r = -l_phi[(i, j)] - self.eigenvalues[j] * mphi;
                    num += r * r;
                    den += mphi * mphi;
                }
                (num / den).sqrt()
            })
            .collect()
    }
}

pub fn spectral_basis(mesh: &TriangleMesh, k: usize) -> Result<SpectralBasis, MeshError> {
    spectral_basis_with(mesh, k, &EigenConfig::default())
}

pub fn spectral_basis_with(mesh: &TriangleMesh, k: usize, config: &EigenConfig) -> Result<SpectralBasis, MeshError> {
    let n = mesh.vertex_count();
    if n < 4 {
        return Err(MeshError::TooFewVertices { id: mesh.id().to_string(), needed: 4, found: n });
    }
    if k == 0 || k >= n {
        return Err(MeshError::InvalidBasisSize { k, vertices: n });
    }
    let lap = cotangent_laplacian(mesh)?;
    let (mut values, mut vectors) = if n <= config.dense_threshold {
        dense_eigs(&lap, k)?
    } else {
        krylov_eigs(&lap, k, config)?
    };
    for v in values.iter_mut() {
        // the kernel comes back as ±1e-14 or so
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    fix_signs(&mut vectors);
    values.truncate(k);
    Ok(SpectralBasis { mesh_id: mesh.id().to_string(), eigenfunctions: vectors, eigenvalues: values, mass: lap.mass })
}

/// Makes the first entry of each column whose magnitude exceeds 1e-6 of the
/// column maximum positive.
fn fix_signs(vectors: &mut Mat<f64>) {
    for j in 0..vectors.ncols() {
        let col = vectors.col(j);
        let max = (0..col.nrows()).map(|i| col[i].abs()).fold(0.0, f64::max);
        let pivot = (0..col.nrows()).find(|&i| col[i].abs() > 1e-6 * max);
        if let Some(i) = pivot {
            if vectors[(i, j)] < 0.0 {
                for r in 0..vectors.nrows() {
                    vectors[(r, j)] = -vectors[(r, j)];
                }
            }
        }
    }
}

fn dense_eigs(lap: &CotanLaplacian, k: usize) -> Result<(Vec<f64>, Mat<f64>), MeshError> {
    let n = lap.size();
    let w = lap.dense_stiffness();
    let inv_sqrt: Vec<f64> = lap.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = Mat::from_fn(n, n, |i, j| -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| MeshError::SolverFailure(format!("dense eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..k).map(|j| s[j]).collect();
    let vectors = Mat::from_fn(n, k, |i, j| u[(i, j)] * inv_sqrt[i]);
    Ok((values, vectors))
}

/// Block Krylov subspace of the shift-inverted operator `(L − σM)⁻¹ M`,
/// kept M-orthonormal with two-pass Gram-Schmidt, with Rayleigh-Ritz on the
/// original pencil. The block grows until the `k` leading Ritz pairs meet
/// the residual tolerance.
fn krylov_eigs(lap: &CotanLaplacian, k: usize, config: &EigenConfig) -> Result<(Vec<f64>, Mat<f64>), MeshError> {
    let n = lap.size();
    let mass = &lap.mass;
    let neg = lap.stiffness.as_ref();
    // L = −W, positive semi-definite
    let mut l_trip = Vec::with_capacity(neg.compute_nnz());
    let mut trace_l = 0.0;
    for j in 0..n {
        let rows = neg.row_idx_of_col_raw(j);
        let vals = neg.val_of_col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            l_trip.push(Triplet::new(i, j, -v));
            if i == j {
                trace_l -= v;
            }
        }
    }
    let trace_m: f64 = mass.iter().sum();
    let sigma = -config.shift * trace_l / trace_m;
    let l_mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &l_trip)
        .map_err(|e| MeshError::SolverFailure(format!("sparse assembly: {e:?}")))?;
    let shifted_trip: Vec<_> = l_trip
        .iter()
        .map(|t| Triplet::new(t.row, t.col, if t.row == t.col { t.val - sigma * mass[t.row] } else { t.val }))
        .collect();
    let shifted = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &shifted_trip)
        .map_err(|e| MeshError::SolverFailure(format!("sparse assembly: {e:?}")))?;
    let factor = shifted
        .sp_cholesky(Side::Lower)
        .map_err(|e| MeshError::SolverFailure(format!("sparse Cholesky of shifted Laplacian: {e:?}")))?;

    let block = config.block_size.max(1).min(n);
    let max_dim = n.min((4 * k).max(k + 200));
    let mut basis = Mat::<f64>::zeros(n, max_dim);
    let mut dim = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let start = Mat::from_fn(n, block, |_, _| rng.random_range(-1.0..1.0));
    dim = append_block(&mut basis, dim, start.as_ref(), mass);
    let mut last_block = (0, dim);
    let check_every = (k / 4).max(block);
    let mut since_check = 0;

    loop {
        let (from, to) = last_block;
        if to == from {
            return Err(MeshError::SolverFailure("Krylov subspace stopped growing".into()));
        }
        let mut z = Mat::from_fn(n, to - from, |i, j| mass[i] * basis[(i, from + j)]);
        factor.solve_in_place(z.as_mut());
        let before = dim;
        dim = append_block(&mut basis, dim, z.as_ref(), mass);
        last_block = (before, dim);
        since_check += dim - before;

        let full = dim >= max_dim || dim == before;
        if dim >= k + block && (since_check >= check_every || full) {
            since_check = 0;
            let q = basis.as_ref().subcols(0, dim);
            let lq = &l_mat * q;
            let mut t = q.transpose() * &lq;
            for i in 0..dim {
                for j in 0..i {
                    let avg = 0.5 * (t[(i, j)] + t[(j, i)]);
                    t[(i, j)] = avg;
                    t[(j, i)] = avg;
                }
            }
            let evd = t
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| MeshError::SolverFailure(format!("Rayleigh-Ritz: {e:?}")))?;
            let theta: Vec<f64> = (0..k).map(|j| evd.S().column_vector()[j]).collect();
            let s = evd.U().subcols(0, k);
            let y = q * s;
            let ly = &lq * s;
            let worst = (0..k)
                .map(|j| {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for i in 0..n {
                        let my = mass[i] * y[(i, j)];
                        let r = ly[(i, j)] - theta[j] * my;
                        num += r * r;
                        den += my * my;
                    }
                    (num / den).sqrt()
                })
                .fold(0.0, f64::max);
            let scale = theta[k - 1].abs().max(f64::MIN_POSITIVE);
            let worst = worst / scale;
            if worst < config.tolerance {
                return Ok((theta, y));
            }
            if full {
                return Err(MeshError::SolverFailure(format!(
                    "residual {worst:.3e} above {:.1e} with a {dim}-dimensional subspace",
                    config.tolerance
                )));
            }
        }
        if dim >= max_dim {
            return Err(MeshError::SolverFailure(format!("subspace limit {max_dim} reached")));
        }
    }
}

/// M-orthogonalizes the columns of `block` against `basis[:, ..dim]` and
/// appends the survivors. Returns the new dimension.
fn append_block(basis: &mut Mat<f64>, mut dim: usize, block: MatRef<'_, f64>, mass: &[f64]) -> usize {
    let n = basis.nrows();
    let cap = basis.ncols();
    for c in 0..block.ncols() {
        if dim >= cap {
            break;
        }
        let mut v = block.col(c).to_owned();
        let norm0 = m_norm(v.as_ref(), mass);
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            if dim == 0 {
                break;
            }
            let mv = faer::Col::from_fn(n, |i| mass[i] * v[i]);
            let q = basis.as_ref().subcols(0, dim);
            let coeffs = q.transpose() * &mv;
            v -= q * &coeffs;
        }
        let norm = m_norm(v.as_ref(), mass);
        if norm <= 1e-10 * norm0 {
            continue;
        }
        for i in 0..n {
            basis[(i, dim)] = v[i] / norm;
        }
        dim += 1;
    }
    dim
}

fn m_norm(v: faer::ColRef<'_, f64>, mass: &[f64]) -> f64 {
    (0..v.nrows()).map(|i| mass[i] * v[i] * v[i]).sum::<f64>().sqrt()
}
